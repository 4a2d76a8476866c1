//! Patient selection among multiple detections, and depth fusion.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{body25, ClassLabel, PoseFrame, Skeleton, IMAGE_HEIGHT, IMAGE_WIDTH};

pub const DEFAULT_GATE_PX: f64 = 150.0;
pub const DEFAULT_LOCK_TIMEOUT_MS: i64 = 2000;
/// Side length of the square depth sampling window.
pub const DEPTH_WINDOW: usize = 5;

const TORSO: [usize; 6] = [
    body25::NECK,
    body25::MID_HIP,
    body25::R_SHOULDER,
    body25::L_SHOULDER,
    body25::R_HIP,
    body25::L_HIP,
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("keypoint {index} at ({x}, {y}) lies outside the {width}x{height} depth map")]
    OutOfBounds { index: usize, x: f64, y: f64, width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Largest center displacement accepted between consecutive selections.
    pub gate_px: f64,
    /// Time without a selection after which the track is re-acquired.
    pub lock_timeout_ms: i64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig { gate_px: DEFAULT_GATE_PX, lock_timeout_ms: DEFAULT_LOCK_TIMEOUT_MS }
    }
}

/// Where the tracked patient was last seen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub last_center_px: Option<(f64, f64)>,
    pub last_seen_ms: Option<i64>,
    pub lock_timeout_ms: i64,
}

impl TrackState {
    pub fn new(lock_timeout_ms: i64) -> Self {
        TrackState { last_center_px: None, last_seen_ms: None, lock_timeout_ms }
    }

    fn locked_center(&self, now_ms: i64) -> Option<(f64, f64)> {
        match (self.last_center_px, self.last_seen_ms) {
            (Some(c), Some(seen)) if now_ms - seen <= self.lock_timeout_ms => Some(c),
            _ => None,
        }
    }
}

impl Default for TrackState {
    fn default() -> Self {
        TrackState::new(DEFAULT_LOCK_TIMEOUT_MS)
    }
}

/// The frame reduced to the single tracked patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientFrame {
    pub timestamp_ms: i64,
    pub skeleton: Skeleton,
    pub label: ClassLabel,
}

fn mean_position<'a>(points: impl Iterator<Item = &'a crate::data::Keypoint>) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for k in points.filter(|k| !k.is_missing()) {
        sx += k.x_px;
        sy += k.y_px;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Mean of the visible torso joints, or of all visible joints if none is.
pub fn torso_center(skeleton: &Skeleton) -> Option<(f64, f64)> {
    mean_position(TORSO.iter().map(|&i| &skeleton.keypoints[i]))
        .or_else(|| mean_position(skeleton.keypoints.iter()))
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::hypot(a.0 - b.0, a.1 - b.1)
}

fn box_contains(skeleton: &Skeleton, p: (f64, f64)) -> bool {
    skeleton
        .bounding_box()
        .is_some_and(|(x0, y0, x1, y1)| p.0 >= x0 && p.0 <= x1 && p.1 >= y0 && p.1 <= y1)
}

/// Index and distance of the candidate nearest to `target`; first wins ties.
fn nearest<'a>(
    candidates: impl Iterator<Item = (usize, &'a Skeleton)>,
    target: (f64, f64),
) -> Option<(usize, f64)> {
    candidates
        .filter_map(|(i, s)| torso_center(s).map(|c| (i, distance(c, target))))
        .fold(None, |best, (i, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((i, d)),
        })
}

/// Picks the patient skeleton in `frame`.
///
/// Precedence: a skeleton whose box contains the marker; else the skeleton
/// nearest to the marker; else the one nearest to the last tracked center;
/// else (no live track) the one nearest to the image center. Marker and
/// track associations are gated by `gate_px`, acquisition from the image
/// center is not. A rejected frame leaves the state untouched.
pub fn select_patient(
    frame: &PoseFrame,
    state: &TrackState,
    gate_px: f64,
) -> (Option<PatientFrame>, TrackState) {
    let skeletons = &frame.skeletons;
    let chosen = if let Some(marker) = frame.marker_px {
        let containing = skeletons.iter().enumerate().filter(|(_, s)| box_contains(s, marker));
        match nearest(containing, marker) {
            Some((i, _)) => Some(i),
            None => nearest(skeletons.iter().enumerate(), marker)
                .filter(|&(_, d)| d <= gate_px)
                .map(|(i, _)| i),
        }
    } else if let Some(center) = state.locked_center(frame.timestamp_ms) {
        nearest(skeletons.iter().enumerate(), center)
            .filter(|&(_, d)| d <= gate_px)
            .map(|(i, _)| i)
    } else {
        nearest(skeletons.iter().enumerate(), (IMAGE_WIDTH / 2.0, IMAGE_HEIGHT / 2.0)).map(|(i, _)| i)
    };

    match chosen {
        Some(i) => {
            let skeleton = skeletons[i].clone();
            let next = TrackState {
                last_center_px: torso_center(&skeleton),
                last_seen_ms: Some(frame.timestamp_ms),
                lock_timeout_ms: state.lock_timeout_ms,
            };
            let patient = PatientFrame { timestamp_ms: frame.timestamp_ms, skeleton, label: frame.label };
            (Some(patient), next)
        }
        None => (None, *state),
    }
}

/// Row-major depth image in meters. Cells equal to `hole` (or non-finite,
/// or non-positive) carry no measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub hole: f32,
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, hole: f32, values: Vec<f32>) -> Option<Self> {
        (values.len() == width * height).then_some(DepthMap { width, height, hole, values })
    }

    pub fn constant(width: usize, height: usize, depth: f32) -> Self {
        DepthMap { width, height, hole: 0.0, values: alloc::vec![depth; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = *self.values.get(y * self.width + x)?;
        (v != self.hole && v.is_finite() && v > 0.0).then_some(v as f64)
    }
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[mid] } else { (values[mid - 1] + values[mid]) / 2.0 })
}

/// Assigns each visible keypoint the median valid depth in a 5x5 window
/// (clipped at the map border). Keypoints over holes get no depth.
pub fn fuse_depth(skeleton: &Skeleton, depth: &DepthMap) -> Result<Skeleton, TrackingError> {
    let half = (DEPTH_WINDOW / 2) as isize;
    let mut out = skeleton.clone();
    let mut window = Vec::with_capacity(DEPTH_WINDOW * DEPTH_WINDOW);
    for (index, k) in out.keypoints.iter_mut().enumerate() {
        if k.is_missing() {
            k.depth_m = None;
            continue;
        }
        let cx = libm::round(k.x_px);
        let cy = libm::round(k.y_px);
        if !(cx >= 0.0 && cy >= 0.0 && cx < depth.width as f64 && cy < depth.height as f64) {
            return Err(TrackingError::OutOfBounds {
                index,
                x: k.x_px,
                y: k.y_px,
                width: depth.width,
                height: depth.height,
            });
        }
        let (cx, cy) = (cx as isize, cy as isize);
        window.clear();
        for y in (cy - half).max(0)..=(cy + half).min(depth.height as isize - 1) {
            for x in (cx - half).max(0)..=(cx + half).min(depth.width as isize - 1) {
                if let Some(d) = depth.get(x as usize, y as usize) {
                    window.push(d);
                }
            }
        }
        k.depth_m = median(&mut window);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Keypoint, NUM_KEYPOINTS};
    use alloc::vec;

    fn skeleton_at(cx: f64, cy: f64, id: u32) -> Skeleton {
        let mut kps = [Keypoint::MISSING; NUM_KEYPOINTS];
        kps[body25::NECK] = Keypoint::new(cx, cy - 30.0, 0.9, None);
        kps[body25::MID_HIP] = Keypoint::new(cx, cy + 30.0, 0.9, None);
        kps[body25::R_SHOULDER] = Keypoint::new(cx - 20.0, cy - 28.0, 0.9, None);
        kps[body25::L_SHOULDER] = Keypoint::new(cx + 20.0, cy - 28.0, 0.9, None);
        kps[body25::R_HIP] = Keypoint::new(cx - 12.0, cy + 30.0, 0.9, None);
        kps[body25::L_HIP] = Keypoint::new(cx + 12.0, cy + 30.0, 0.9, None);
        kps[body25::R_ANKLE] = Keypoint::new(cx - 12.0, cy + 120.0, 0.9, None);
        kps[body25::L_ANKLE] = Keypoint::new(cx + 12.0, cy + 120.0, 0.9, None);
        Skeleton::new(kps, id)
    }

    fn frame(t: i64, skeletons: Vec<Skeleton>, marker: Option<(f64, f64)>) -> PoseFrame {
        PoseFrame { timestamp_ms: t, skeletons, marker_px: marker, label: ClassLabel::Normal }
    }

    #[test]
    fn single_skeleton_selected_from_empty_state() {
        let (p, s) = select_patient(&frame(0, vec![skeleton_at(100.0, 100.0, 4)], None), &TrackState::default(), 150.0);
        assert_eq!(p.unwrap().skeleton.person_index, 4);
        assert_eq!(s.last_seen_ms, Some(0));
        assert!(s.last_center_px.is_some());
    }

    #[test]
    fn marker_inside_box_wins_over_distance() {
        let a = skeleton_at(240.0, 180.0, 0);
        let b = skeleton_at(400.0, 180.0, 1);
        let state = TrackState { last_center_px: Some((240.0, 180.0)), last_seen_ms: Some(0), lock_timeout_ms: 2000 };
        let (p, _) = select_patient(&frame(100, vec![a, b], Some((405.0, 200.0))), &state, 150.0);
        assert_eq!(p.unwrap().skeleton.person_index, 1);
    }

    #[test]
    fn nearest_within_gate_is_kept() {
        let state = TrackState { last_center_px: Some((200.0, 180.0)), last_seen_ms: Some(0), lock_timeout_ms: 2000 };
        let near = skeleton_at(250.0, 180.0, 7);
        let far = skeleton_at(500.0, 180.0, 8);
        let (p, s) = select_patient(&frame(100, vec![far.clone(), near], None), &state, 150.0);
        assert_eq!(p.unwrap().skeleton.person_index, 7);
        assert_eq!(s.last_center_px.unwrap().0, 250.0);

        // only the far one left: gated out, state untouched
        let (p, s2) = select_patient(&frame(200, vec![far], None), &s, 150.0);
        assert!(p.is_none());
        assert_eq!(s2, s);
    }

    #[test]
    fn empty_frame_yields_nothing() {
        let (p, s) = select_patient(&frame(0, vec![], None), &TrackState::default(), 150.0);
        assert!(p.is_none());
        assert_eq!(s, TrackState::default());
    }

    #[test]
    fn expired_lock_reacquires_from_image_center() {
        let state = TrackState { last_center_px: Some((20.0, 180.0)), last_seen_ms: Some(0), lock_timeout_ms: 2000 };
        let s = skeleton_at(240.0, 180.0, 3);
        let (p, _) = select_patient(&frame(1000, vec![s.clone()], None), &state, 150.0);
        assert!(p.is_none());
        let (p, _) = select_patient(&frame(2500, vec![s], None), &state, 150.0);
        assert_eq!(p.unwrap().skeleton.person_index, 3);
    }

    #[test]
    fn constant_depth_is_copied() {
        let map = DepthMap::constant(480, 360, 2.0);
        let fused = fuse_depth(&skeleton_at(240.0, 180.0, 0), &map).unwrap();
        for k in fused.keypoints.iter() {
            if k.is_missing() {
                assert_eq!(k.depth_m, None);
            } else {
                assert_eq!(k.depth_m, Some(2.0));
            }
        }
    }

    #[test]
    fn window_median_skips_holes() {
        // 5x5 map, hole sentinel 9.0; brute force: valid values sorted, middle
        let vals: Vec<f32> = vec![
            1.0, 1.0, 9.0, 1.2, 1.4, //
            9.0, 2.0, 2.2, 9.0, 1.1, //
            1.3, 9.0, 9.0, 1.5, 9.0, //
            2.4, 2.1, 1.6, 9.0, 9.0, //
            9.0, 9.0, 1.7, 1.8, 1.9,
        ];
        let map = DepthMap::new(5, 5, 9.0, vals.clone()).unwrap();
        let mut kps = [Keypoint::MISSING; NUM_KEYPOINTS];
        kps[0] = Keypoint::new(2.0, 2.0, 1.0, None);
        let fused = fuse_depth(&Skeleton::new(kps, 0), &map).unwrap();

        let mut valid: Vec<f64> = vals.iter().filter(|v| **v != 9.0).map(|v| *v as f64).collect();
        valid.sort_by(f64::total_cmp);
        assert_eq!(valid.len(), 15);
        let expected = valid[7];
        assert_eq!(fused.keypoints[0].depth_m, Some(expected));
        assert_eq!(fused.keypoints[1].depth_m, None);
    }

    #[test]
    fn all_holes_give_no_depth() {
        let map = DepthMap::new(3, 3, -1.0, vec![-1.0; 9]).unwrap();
        let mut kps = [Keypoint::MISSING; NUM_KEYPOINTS];
        kps[0] = Keypoint::new(1.0, 1.0, 1.0, Some(5.0));
        assert_eq!(fuse_depth(&Skeleton::new(kps, 0), &map).unwrap().keypoints[0].depth_m, None);
    }

    #[test]
    fn outside_map_is_an_error() {
        let mut kps = [Keypoint::MISSING; NUM_KEYPOINTS];
        kps[3] = Keypoint::new(500.0, 10.0, 1.0, None);
        let err = fuse_depth(&Skeleton::new(kps, 0), &DepthMap::constant(480, 360, 1.0)).unwrap_err();
        assert!(matches!(err, TrackingError::OutOfBounds { index: 3, .. }));
    }
}
