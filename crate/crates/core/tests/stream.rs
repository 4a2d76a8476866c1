use emergency_core::data::ClassLabel::{self, Emergency, Normal};
use emergency_core::pipeline::{run_video, train_on_dataset};
use emergency_core::stream::{detect_events, emergency_counts, evaluate_delay, optimize_delay, VideoPredictions};
use emergency_core::synth::{generate_dataset, generate_sequence, ScenarioCount, ScenarioKind, ScenarioSpec, SynthPlan};
use emergency_core::classifiers::{Gamma, HyperparameterSpec, KernelKind, SvmParams};
use emergency_core::data::TransportMode;
use emergency_core::tracking::TrackerConfig;
use proptest::prelude::*;

/// Long Normal stretch with isolated single-frame false alarms, then a long
/// true emergency.
fn noisy_video(id: usize, outliers: &[bool], emergency_len: usize) -> VideoPredictions {
    let mut predicted: Vec<ClassLabel> = Vec::new();
    let mut truth = Vec::new();
    let mut last_outlier = false;
    for &o in outliers {
        let flip = o && !last_outlier;
        predicted.push(if flip { Emergency } else { Normal });
        truth.push(Normal);
        last_outlier = flip;
    }
    predicted.push(Normal);
    truth.push(Normal);
    predicted.extend(std::iter::repeat_n(Emergency, emergency_len));
    truth.extend(std::iter::repeat_n(Emergency, emergency_len));
    VideoPredictions {
        video_id: format!("v{id}"),
        frame_period_ms: 100,
        timestamps_ms: (0..truth.len() as i64).map(|i| i * 100).collect(),
        predicted,
        truth,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn isolated_false_alarms_are_filtered(
        videos in prop::collection::vec((prop::collection::vec(prop::bool::weighted(0.05), 60..200), 30usize..80), 1..5),
    ) {
        let videos: Vec<VideoPredictions> =
            videos.iter().enumerate().map(|(i, (o, len))| noisy_video(i, o, *len)).collect();
        let fp_raw: u64 = videos.iter().map(|v| emergency_counts(&v.predicted, &v.truth).1).sum();
        prop_assume!(fp_raw > 0);
        let best = optimize_delay(&videos).unwrap();
        let at = evaluate_delay(&videos, best.delay_ms);
        prop_assert!(best.delay_ms >= 10);
        prop_assert!(at.fp < fp_raw);
        prop_assert_eq!(best.curve.len(), 151);
    }
}

#[test]
fn two_separated_falls_give_two_events() {
    let raw = [Normal, Emergency, Emergency, Emergency, Normal, Normal, Normal, Emergency, Emergency, Emergency, Normal];
    let committed = emergency_core::stream::apply_delay(&raw, 10, 100);
    let ts: Vec<i64> = (0..raw.len() as i64).map(|i| i * 100).collect();
    let events = detect_events("v", &ts, &raw, &committed);
    assert_eq!(events.len(), 2);
    assert_eq!((events[0].first_raw_timestamp_ms, events[0].trigger_timestamp_ms), (100, 200));
    assert_eq!((events[1].first_raw_timestamp_ms, events[1].trigger_timestamp_ms), (700, 800));
}

#[test]
fn streaming_a_synthetic_fall_raises_one_event_after_onset() {
    let plan = SynthPlan {
        mode: TransportMode::Walking,
        duration_frames: 50,
        noise_px: 1.0,
        dropout_rate: 0.0,
        seed: 11,
        scenarios: vec![
            ScenarioCount { kind: ScenarioKind::Walk, count: 6 },
            ScenarioCount { kind: ScenarioKind::FallDuringWalk, count: 6 },
        ],
    };
    let train = generate_dataset(&plan).unwrap();
    let spec = HyperparameterSpec::Svm(SvmParams { c: 10.0, kernel: KernelKind::Rbf, degree: 2, gamma: Gamma::Value(0.5) });
    let tracker = TrackerConfig::default();
    let model = train_on_dataset(&spec, &train, &tracker, 0).unwrap();

    let fall = generate_sequence(&ScenarioSpec { kind: ScenarioKind::FallDuringWalk, duration_frames: 50, noise_px: 1.0, dropout_rate: 0.0, seed: 999 }).unwrap();
    let onset = fall.frames.iter().find(|f| f.label == Emergency).unwrap().timestamp_ms;
    let trace = run_video(&model, None, 300, &fall, &tracker).unwrap();
    assert_eq!(trace.events.len(), 1);
    assert!(trace.events[0].trigger_timestamp_ms >= onset);

    let walk = generate_sequence(&ScenarioSpec { kind: ScenarioKind::Walk, duration_frames: 50, noise_px: 1.0, dropout_rate: 0.0, seed: 998 }).unwrap();
    assert!(run_video(&model, None, 300, &walk, &tracker).unwrap().events.is_empty());
}
