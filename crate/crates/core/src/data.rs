//! Domain types for keypoint streams and video-level dataset splits.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of keypoints in the BODY_25 layout.
pub const NUM_KEYPOINTS: usize = 25;
/// Pose estimator input width in pixels.
pub const IMAGE_WIDTH: f64 = 480.0;
/// Pose estimator input height in pixels.
pub const IMAGE_HEIGHT: f64 = 360.0;
/// Default capture period (10 Hz).
pub const DEFAULT_FRAME_PERIOD_MS: u32 = 100;

/// BODY_25 keypoint indices.
pub mod body25 {
    pub const NOSE: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const MID_HIP: usize = 8;
    pub const R_HIP: usize = 9;
    pub const R_KNEE: usize = 10;
    pub const R_ANKLE: usize = 11;
    pub const L_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const L_ANKLE: usize = 14;
    pub const R_EYE: usize = 15;
    pub const L_EYE: usize = 16;
    pub const R_EAR: usize = 17;
    pub const L_EAR: usize = 18;
    pub const L_BIG_TOE: usize = 19;
    pub const L_SMALL_TOE: usize = 20;
    pub const L_HEEL: usize = 21;
    pub const R_BIG_TOE: usize = 22;
    pub const R_SMALL_TOE: usize = 23;
    pub const R_HEEL: usize = 24;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("unknown class label id {0}")]
    UnknownLabel(u8),
    #[error("need at least {needed} videos, dataset has {found}")]
    TooFewVideos { needed: usize, found: usize },
    #[error("invalid split parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Frame-level class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum ClassLabel {
    Normal = 0,
    Emergency = 1,
    Pause = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Normal, ClassLabel::Emergency, ClassLabel::Pause];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_emergency(self) -> bool {
        self == ClassLabel::Emergency
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = DataError;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        match id {
            0 => Ok(ClassLabel::Normal),
            1 => Ok(ClassLabel::Emergency),
            2 => Ok(ClassLabel::Pause),
            other => Err(DataError::UnknownLabel(other)),
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(label: ClassLabel) -> u8 {
        label.id()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ClassLabel::Normal => "Normal",
            ClassLabel::Emergency => "Emergency",
            ClassLabel::Pause => "Pause",
        };
        f.write_str(name)
    }
}

/// Robot transport configuration; decides the class set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Walking,
    Wheelchair,
    Combined,
}

impl TransportMode {
    /// Walking is binary (Normal/Emergency); the others add Pause.
    pub fn n_classes(self) -> usize {
        match self {
            TransportMode::Walking => 2,
            TransportMode::Wheelchair | TransportMode::Combined => 3,
        }
    }

    pub fn is_binary(self) -> bool {
        self.n_classes() == 2
    }

    /// Whether a video recorded in `video_mode` belongs to a dataset of this mode.
    pub fn accepts(self, video_mode: TransportMode) -> bool {
        self == TransportMode::Combined || self == video_mode
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransportMode::Walking => "walking",
            TransportMode::Wheelchair => "wheelchair",
            TransportMode::Combined => "combined",
        }
    }
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One detected body joint. A confidence of 0 marks the joint as missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x_px: f64,
    pub y_px: f64,
    pub confidence: f64,
    pub depth_m: Option<f64>,
}

impl Keypoint {
    pub const MISSING: Keypoint = Keypoint { x_px: 0.0, y_px: 0.0, confidence: 0.0, depth_m: None };

    pub fn new(x_px: f64, y_px: f64, confidence: f64, depth_m: Option<f64>) -> Self {
        if confidence <= 0.0 {
            return Self::MISSING;
        }
        Keypoint { x_px, y_px, confidence: confidence.min(1.0), depth_m: depth_m.filter(|d| *d > 0.0) }
    }

    pub fn is_missing(&self) -> bool {
        self.confidence <= 0.0
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x_px, self.y_px)
    }
}

/// A BODY_25 skeleton of one detected person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
    pub person_index: u32,
}

impl Skeleton {
    pub fn new(keypoints: [Keypoint; NUM_KEYPOINTS], person_index: u32) -> Self {
        Skeleton { keypoints, person_index }
    }

    pub fn visible(&self) -> impl Iterator<Item = (usize, &Keypoint)> {
        self.keypoints.iter().enumerate().filter(|(_, k)| !k.is_missing())
    }

    pub fn visible_count(&self) -> usize {
        self.visible().count()
    }

    /// Axis-aligned box `(min_x, min_y, max_x, max_y)` over visible keypoints.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64, f64)> {
        let mut it = self.visible();
        let (_, first) = it.next()?;
        let init = (first.x_px, first.y_px, first.x_px, first.y_px);
        Some(it.fold(init, |(x0, y0, x1, y1), (_, k)| {
            (x0.min(k.x_px), y0.min(k.y_px), x1.max(k.x_px), y1.max(k.y_px))
        }))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Skeleton {
        let mut out = self.clone();
        for k in out.keypoints.iter_mut().filter(|k| !k.is_missing()) {
            k.x_px += dx;
            k.y_px += dy;
        }
        out
    }
}

/// All detections of one timestamp plus the ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub timestamp_ms: i64,
    pub skeletons: Vec<Skeleton>,
    pub marker_px: Option<(f64, f64)>,
    pub label: ClassLabel,
}

/// One recording; the unit of dataset splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSequence {
    pub video_id: String,
    pub frames: Vec<PoseFrame>,
    pub mode: TransportMode,
    pub frame_period_ms: u32,
    pub camera: String,
    pub location: String,
}

impl VideoSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        self.frames.iter().map(|f| f.label)
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.frames.iter().map(|f| f.timestamp_ms).collect()
    }

    /// Timestamps strictly increasing.
    pub fn is_time_ordered(&self) -> bool {
        self.frames.windows(2).all(|w| w[0].timestamp_ms < w[1].timestamp_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sequences: Vec<VideoSequence>,
    pub mode: TransportMode,
}

impl Dataset {
    pub fn new(mode: TransportMode) -> Self {
        Dataset { sequences: Vec::new(), mode }
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(VideoSequence::len).sum()
    }

    pub fn video_ids(&self) -> impl Iterator<Item = &str> {
        self.sequences.iter().map(|v| v.video_id.as_str())
    }

    /// New dataset holding the videos at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            mode: self.mode,
        }
    }
}

/// Frame counts per class, indexed by class id.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub normal: usize,
    pub emergency: usize,
    pub pause: usize,
}

impl ClassCounts {
    pub fn get(&self, label: ClassLabel) -> usize {
        match label {
            ClassLabel::Normal => self.normal,
            ClassLabel::Emergency => self.emergency,
            ClassLabel::Pause => self.pause,
        }
    }

    pub fn total(&self) -> usize {
        self.normal + self.emergency + self.pause
    }

    fn bump(&mut self, label: ClassLabel) {
        match label {
            ClassLabel::Normal => self.normal += 1,
            ClassLabel::Emergency => self.emergency += 1,
            ClassLabel::Pause => self.pause += 1,
        }
    }
}

pub fn class_distribution(dataset: &Dataset) -> ClassCounts {
    let mut counts = ClassCounts::default();
    for label in dataset.sequences.iter().flat_map(VideoSequence::labels) {
        counts.bump(label);
    }
    counts
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

/// Video-level train/test split.
///
/// Videos are visited in a seeded random order and moved to the test side
/// whenever that brings the test frame count closer to
/// `test_fraction * total_frames`. Both sides always hold at least one video.
/// Videos keep their original relative order inside each side.
pub fn split_videos(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidParameter("test_fraction must lie in (0, 1)"));
    }
    let n = dataset.sequences.len();
    if n < 2 {
        return Err(DataError::TooFewVideos { needed: 2, found: n });
    }
    let target = test_fraction * dataset.total_frames() as f64;
    let order = shuffled_indices(n, seed);

    let mut in_test = alloc::vec![false; n];
    let mut test_frames = 0usize;
    for &i in &order {
        let len = dataset.sequences[i].len();
        let now = libm::fabs(test_frames as f64 - target);
        let with = libm::fabs((test_frames + len) as f64 - target);
        if with < now {
            in_test[i] = true;
            test_frames += len;
        }
    }
    if !in_test.iter().any(|&t| t) {
        in_test[order[0]] = true;
    }
    if in_test.iter().all(|&t| t) {
        in_test[order[n - 1]] = false;
    }

    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_test[i]);
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Index view of one cross-validation fold over `Dataset::sequences`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoFold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl VideoFold {
    pub fn materialize(&self, dataset: &Dataset) -> (Dataset, Dataset) {
        (dataset.subset(&self.train), dataset.subset(&self.validation))
    }
}

/// Grouped k-fold: every video lands in exactly one validation fold.
///
/// Videos are shuffled with `seed` and dealt round-robin, so fold sizes differ
/// by at most one video.
pub fn kfold_videos(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<VideoFold>, DataError> {
    if k < 2 {
        return Err(DataError::InvalidParameter("k must be at least 2"));
    }
    let n = dataset.sequences.len();
    if n < k {
        return Err(DataError::TooFewVideos { needed: k, found: n });
    }
    let order = shuffled_indices(n, seed);
    let mut fold_of = alloc::vec![0usize; n];
    for (pos, &video) in order.iter().enumerate() {
        fold_of[video] = pos % k;
    }
    Ok((0..k)
        .map(|fold| {
            let (validation, train) = (0..n).partition(|&i| fold_of[i] == fold);
            VideoFold { train, validation }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn video(id: &str, frames: usize, label: ClassLabel) -> VideoSequence {
        let kp = [Keypoint::new(10.0, 10.0, 0.9, Some(2.0)); NUM_KEYPOINTS];
        VideoSequence {
            video_id: id.into(),
            frames: (0..frames)
                .map(|i| PoseFrame {
                    timestamp_ms: i as i64 * 100,
                    skeletons: vec![Skeleton::new(kp, 0)],
                    marker_px: None,
                    label,
                })
                .collect(),
            mode: TransportMode::Walking,
            frame_period_ms: 100,
            camera: "cam".into(),
            location: "lab".into(),
        }
    }

    fn dataset(sizes: &[usize]) -> Dataset {
        Dataset {
            sequences: sizes.iter().enumerate().map(|(i, &n)| video(&format!("v{i}"), n, ClassLabel::Normal)).collect(),
            mode: TransportMode::Walking,
        }
    }

    #[test]
    fn label_ids_round_trip_and_reject_unknown() {
        for label in ClassLabel::ALL {
            assert_eq!(ClassLabel::try_from(label.id()).unwrap(), label);
        }
        assert_eq!(ClassLabel::try_from(7), Err(DataError::UnknownLabel(7)));
    }

    #[test]
    fn missing_keypoint_is_zeroed() {
        let k = Keypoint::new(123.0, 45.0, 0.0, Some(1.0));
        assert!(k.is_missing());
        assert_eq!((k.x_px, k.y_px, k.depth_m), (0.0, 0.0, None));
    }

    #[test]
    fn distribution_of_empty_and_single_class() {
        assert_eq!(class_distribution(&Dataset::new(TransportMode::Combined)), ClassCounts::default());
        let ds = dataset(&[10]);
        let counts = class_distribution(&ds);
        assert_eq!((counts.normal, counts.emergency, counts.pause), (10, 0, 0));
    }

    #[test]
    fn split_two_videos_in_half() {
        let ds = dataset(&[20, 20]);
        let (train, test) = split_videos(&ds, 0.5, 3).unwrap();
        assert_eq!(train.sequences.len(), 1);
        assert_eq!(test.sequences.len(), 1);
        assert_ne!(train.sequences[0].video_id, test.sequences[0].video_id);
    }

    #[test]
    fn split_is_deterministic_and_rejects_bad_input() {
        let ds = dataset(&[5, 9, 12, 3, 7, 30, 11, 4]);
        let a = split_videos(&ds, 0.31, 42).unwrap();
        let b = split_videos(&ds, 0.31, 42).unwrap();
        assert_eq!(a, b);
        assert!(matches!(split_videos(&dataset(&[4]), 0.5, 0), Err(DataError::TooFewVideos { .. })));
        assert!(split_videos(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn kfold_sizes() {
        let ds = dataset(&[1; 10]);
        let folds = kfold_videos(&ds, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.validation.len() == 2 && f.train.len() == 8));
        let ds = dataset(&[1; 200]);
        let folds = kfold_videos(&ds, 5, 9).unwrap();
        assert!(folds.iter().all(|f| f.validation.len() == 40));
        assert!(matches!(kfold_videos(&dataset(&[1; 3]), 5, 0), Err(DataError::TooFewVideos { .. })));
    }
}
