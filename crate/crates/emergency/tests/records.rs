use emergency::depth_io::{decode_depth_map, encode_depth_map};
use emergency::records::{parse_frame_record, serialize_frame_record};
use emergency_core::data::{ClassLabel, Keypoint, PoseFrame, Skeleton, NUM_KEYPOINTS};
use emergency_core::tracking::DepthMap;
use proptest::prelude::*;

fn keypoint() -> impl Strategy<Value = Keypoint> {
    (-50.0..530.0f64, -50.0..410.0f64, 0.01..1.0f64, prop::option::of(0.3..8.0f64), prop::bool::weighted(0.8))
        .prop_map(|(x, y, c, d, visible)| if visible { Keypoint::new(x, y, c, d) } else { Keypoint::MISSING })
}

fn skeleton() -> impl Strategy<Value = Skeleton> {
    (prop::collection::vec(keypoint(), NUM_KEYPOINTS), 0u32..10)
        .prop_map(|(kps, id)| Skeleton::new(kps.try_into().unwrap(), id))
}

fn frame() -> impl Strategy<Value = PoseFrame> {
    (
        -1_000_000i64..1_000_000_000,
        prop::collection::vec(skeleton(), 0..5),
        prop::option::of((0.0..480.0f64, 0.0..360.0f64)),
        0u8..3,
    )
        .prop_map(|(timestamp_ms, skeletons, marker_px, label)| PoseFrame {
            timestamp_ms,
            skeletons,
            marker_px,
            label: ClassLabel::try_from(label).unwrap(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn frame_records_round_trip_exactly(f in frame()) {
        let line = serialize_frame_record(&f);
        prop_assert!(!line.contains('\n'));
        let back = parse_frame_record(&line).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(serialize_frame_record(&back), line);
    }

    #[test]
    fn depth_maps_round_trip(w in 1usize..20, h in 1usize..20, seed in prop::collection::vec(0.0f32..10.0, 400)) {
        let values: Vec<f32> = seed.into_iter().take(w * h).collect();
        let map = DepthMap::new(w, h, 0.0, values).unwrap();
        let bytes = encode_depth_map(&map);
        prop_assert_eq!(decode_depth_map(&bytes).unwrap(), map);
    }
}
