//! Temporal post-processing of per-frame classifications.
//!
//! The [`DelayFilter`] is a persistence check: a new class is committed only
//! after it has been predicted for `n_d` consecutive frames, and until then
//! the frames count towards the previously committed class. With a delay of
//! `d` ms and frame period `p`, `n_d = 1` for `d = 0` and
//! `1 + ceil(d / p)` otherwise.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ClassLabel;
use crate::metrics::{f1_fraction, fraction_gt, prf_from_counts};

pub const DELAY_GRID_MAX_MS: u32 = 1500;
pub const DELAY_GRID_STEP_MS: u32 = 10;
/// Number of points on the delay grid (0 to 1500 ms inclusive).
pub const DELAY_GRID_LEN: usize = (DELAY_GRID_MAX_MS / DELAY_GRID_STEP_MS) as usize + 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("no Emergency frames in the ground truth")]
    NoEmergencyTruth,
    #[error("video {0}: predictions, truth and timestamps differ in length")]
    LengthMismatch(String),
    #[error("frame period must be positive")]
    InvalidFramePeriod,
}

/// Consecutive frames a new class must persist for before it is committed.
pub fn required_persistence(delay_ms: u32, frame_period_ms: u32) -> u32 {
    if delay_ms == 0 {
        1
    } else {
        1 + delay_ms.div_ceil(frame_period_ms.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayFilter {
    pub delay_ms: u32,
    pub frame_period_ms: u32,
    pub committed: ClassLabel,
    pub pending: Option<(ClassLabel, u32)>,
}

impl DelayFilter {
    pub fn new(delay_ms: u32, frame_period_ms: u32) -> Self {
        DelayFilter { delay_ms, frame_period_ms, committed: ClassLabel::Normal, pending: None }
    }

    pub fn required(&self) -> u32 {
        required_persistence(self.delay_ms, self.frame_period_ms)
    }

    /// Feeds one raw classification and returns the committed label.
    pub fn step(&mut self, raw: ClassLabel) -> ClassLabel {
        if raw == self.committed {
            self.pending = None;
            return self.committed;
        }
        let count = match self.pending {
            Some((label, n)) if label == raw => n + 1,
            _ => 1,
        };
        if count >= self.required() {
            self.committed = raw;
            self.pending = None;
        } else {
            self.pending = Some((raw, count));
        }
        self.committed
    }

    pub fn run(&mut self, raw: &[ClassLabel]) -> Vec<ClassLabel> {
        raw.iter().map(|&r| self.step(r)).collect()
    }
}

/// Functional form of [`DelayFilter::step`].
pub fn delay_filter_step(filter: &DelayFilter, raw: ClassLabel) -> (DelayFilter, ClassLabel) {
    let mut next = filter.clone();
    let committed = next.step(raw);
    (next, committed)
}

pub fn apply_delay(raw: &[ClassLabel], delay_ms: u32, frame_period_ms: u32) -> Vec<ClassLabel> {
    DelayFilter::new(delay_ms, frame_period_ms).run(raw)
}

/// Raw per-frame predictions of one video next to its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPredictions {
    pub video_id: String,
    pub frame_period_ms: u32,
    pub timestamps_ms: Vec<i64>,
    pub predicted: Vec<ClassLabel>,
    pub truth: Vec<ClassLabel>,
}

impl VideoPredictions {
    fn check(&self) -> Result<(), StreamError> {
        if self.predicted.len() != self.truth.len() || self.timestamps_ms.len() != self.truth.len() {
            return Err(StreamError::LengthMismatch(self.video_id.clone()));
        }
        if self.frame_period_ms == 0 {
            return Err(StreamError::InvalidFramePeriod);
        }
        Ok(())
    }
}

/// Emergency one-vs-rest `(tp, fp, fn)` between two label streams.
pub fn emergency_counts(predicted: &[ClassLabel], truth: &[ClassLabel]) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in predicted.iter().zip(truth) {
        match (p.is_emergency(), t.is_emergency()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    pub delay_ms: u32,
    pub f1: f64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayOptimum {
    pub delay_ms: u32,
    pub curve: Vec<DelayPoint>,
}

pub fn delay_grid() -> impl Iterator<Item = u32> {
    (0..DELAY_GRID_LEN as u32).map(|i| i * DELAY_GRID_STEP_MS)
}

fn pooled_counts(videos: &[VideoPredictions], delay_ms: u32) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for v in videos {
        let committed = apply_delay(&v.predicted, delay_ms, v.frame_period_ms);
        let (a, b, c) = emergency_counts(&committed, &v.truth);
        tp += a;
        fp += b;
        fn_ += c;
    }
    (tp, fp, fn_)
}

/// Scores one delay on pooled frames of all videos.
pub fn evaluate_delay(videos: &[VideoPredictions], delay_ms: u32) -> DelayPoint {
    let (tp, fp, fn_) = pooled_counts(videos, delay_ms);
    let (_, _, f1) = prf_from_counts(tp, fp, fn_);
    DelayPoint { delay_ms, f1: f1.value, fp, fn_ }
}

/// Delay in `{0, 10, ..., 1500}` ms maximizing the pooled Emergency F1.
/// Ties go to the shortest delay.
pub fn optimize_delay(videos: &[VideoPredictions]) -> Result<DelayOptimum, StreamError> {
    for v in videos {
        v.check()?;
    }
    if !videos.iter().any(|v| v.truth.iter().any(|t| t.is_emergency())) {
        return Err(StreamError::NoEmergencyTruth);
    }
    let mut curve = Vec::with_capacity(DELAY_GRID_LEN);
    let mut best: Option<(u32, (u128, u128))> = None;
    for d in delay_grid() {
        let (tp, fp, fn_) = pooled_counts(videos, d);
        let exact = f1_fraction(tp, fp, fn_);
        if best.is_none_or(|(_, bf)| fraction_gt(exact, bf)) {
            best = Some((d, exact));
        }
        let (_, _, f1) = prf_from_counts(tp, fp, fn_);
        curve.push(DelayPoint { delay_ms: d, f1: f1.value, fp, fn_ });
    }
    let best = best.map_or(0, |b| b.0);
    Ok(DelayOptimum { delay_ms: best, curve })
}

/// A committed emergency: when it was triggered and when the raw
/// classification that led to it started.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergencyEvent {
    pub video_id: String,
    pub trigger_timestamp_ms: i64,
    pub first_raw_timestamp_ms: i64,
}

/// Incremental event detector, fed one frame at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTracker {
    raw_run_start: Option<i64>,
    in_event: bool,
}

impl EventTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(
        &mut self,
        video_id: &str,
        timestamp_ms: i64,
        raw: ClassLabel,
        committed: ClassLabel,
    ) -> Option<EmergencyEvent> {
        self.raw_run_start = match (raw.is_emergency(), self.raw_run_start) {
            (true, Some(start)) => Some(start),
            (true, None) => Some(timestamp_ms),
            (false, _) => None,
        };
        let was = self.in_event;
        self.in_event = committed.is_emergency();
        (self.in_event && !was).then(|| EmergencyEvent {
            video_id: video_id.into(),
            trigger_timestamp_ms: timestamp_ms,
            first_raw_timestamp_ms: self.raw_run_start.unwrap_or(timestamp_ms),
        })
    }
}

/// One event per maximal run of committed Emergency frames.
pub fn detect_events(
    video_id: &str,
    timestamps_ms: &[i64],
    raw: &[ClassLabel],
    committed: &[ClassLabel],
) -> Vec<EmergencyEvent> {
    let mut tracker = EventTracker::new();
    timestamps_ms
        .iter()
        .zip(raw.iter().zip(committed))
        .filter_map(|(&t, (&r, &c))| tracker.step(video_id, t, r, c))
        .collect()
}

/// Time until raw predictions settle on Emergency after each true onset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    /// Per detected event, in onset order.
    pub latencies_ms: Vec<i64>,
    pub detected: usize,
    pub undetected: usize,
    pub mean_ms: f64,
    /// Population standard deviation.
    pub std_ms: f64,
    pub max_ms: i64,
}

impl LatencyStats {
    pub fn from_latencies(latencies_ms: Vec<i64>, undetected: usize) -> Self {
        let n = latencies_ms.len();
        let (mean_ms, std_ms) = if n == 0 {
            (0.0, 0.0)
        } else {
            let mean = latencies_ms.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
            let var = latencies_ms.iter().map(|&l| (l as f64 - mean) * (l as f64 - mean)).sum::<f64>() / n as f64;
            (mean, libm::sqrt(var))
        };
        LatencyStats {
            max_ms: latencies_ms.iter().copied().max().unwrap_or(0),
            detected: n,
            undetected,
            mean_ms,
            std_ms,
            latencies_ms,
        }
    }

    pub fn merge(parts: &[LatencyStats]) -> Self {
        let latencies = parts.iter().flat_map(|p| p.latencies_ms.iter().copied()).collect();
        LatencyStats::from_latencies(latencies, parts.iter().map(|p| p.undetected).sum())
    }
}

/// For each maximal truth-Emergency run, the latency is the time from its
/// first frame to the first raw Emergency frame after which the raw
/// prediction stays Emergency until the run ends. Runs whose last frame is
/// not predicted Emergency count as undetected.
pub fn stability_latency(timestamps_ms: &[i64], raw: &[ClassLabel], truth: &[ClassLabel]) -> LatencyStats {
    let n = timestamps_ms.len().min(raw.len()).min(truth.len());
    let mut latencies = Vec::new();
    let mut undetected = 0;
    let mut i = 0;
    while i < n {
        if !truth[i].is_emergency() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && truth[i].is_emergency() {
            i += 1;
        }
        let end = i; // exclusive
        let mut stable_from = end;
        while stable_from > start && raw[stable_from - 1].is_emergency() {
            stable_from -= 1;
        }
        if stable_from == end {
            undetected += 1;
        } else {
            latencies.push(timestamps_ms[stable_from] - timestamps_ms[start]);
        }
    }
    LatencyStats::from_latencies(latencies, undetected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use ClassLabel::{Emergency as E, Normal as N, Pause as P};

    #[test]
    fn persistence_formula() {
        assert_eq!(required_persistence(0, 100), 1);
        assert_eq!(required_persistence(10, 100), 2);
        assert_eq!(required_persistence(100, 100), 2);
        assert_eq!(required_persistence(110, 100), 3);
        assert_eq!(required_persistence(1500, 100), 16);
    }

    #[test]
    fn zero_delay_is_identity() {
        let raw = [N, E, P, E, N, N, P];
        assert_eq!(apply_delay(&raw, 0, 100), raw.to_vec());
    }

    #[test]
    fn isolated_outlier_is_suppressed() {
        assert_eq!(apply_delay(&[N, N, E, N, N], 10, 100), vec![N; 5]);
    }

    #[test]
    fn emergency_surfaces_one_frame_late() {
        assert_eq!(apply_delay(&[N, E, E, E, E], 10, 100), vec![N, N, E, E, E]);
    }

    #[test]
    fn different_label_resets_pending() {
        let mut f = DelayFilter::new(100, 100);
        assert_eq!(f.step(E), N);
        assert_eq!(f.pending, Some((E, 1)));
        assert_eq!(f.step(P), N);
        assert_eq!(f.pending, Some((P, 1)));
        assert_eq!(f.step(P), P);
        assert_eq!(f.pending, None);
        let (g, c) = delay_filter_step(&f, P);
        assert_eq!((c, g.pending), (P, None));
    }

    #[test]
    fn events_per_committed_run() {
        let ts: Vec<i64> = (0..12).map(|i| i * 100).collect();
        assert!(detect_events("v", &ts, &[N; 12], &[N; 12]).is_empty());

        let raw = [N, E, E, E, N, N, N, E, E, E, N, N];
        let committed = apply_delay(&raw, 10, 100);
        let events = detect_events("v", &ts, &raw, &committed);
        assert_eq!(events.len(), 2);
        assert_eq!((events[0].first_raw_timestamp_ms, events[0].trigger_timestamp_ms), (100, 200));
        assert_eq!((events[1].first_raw_timestamp_ms, events[1].trigger_timestamp_ms), (700, 800));
    }

    #[test]
    fn latency_examples() {
        let ts: Vec<i64> = (0..8).map(|i| i * 100).collect();
        let truth = [N, N, E, E, E, E, E, E];
        let s = stability_latency(&ts, &[N, N, E, E, E, E, E, E], &truth);
        assert_eq!((s.latencies_ms.clone(), s.detected, s.undetected), (vec![0], 1, 0));

        let truth = [E; 7];
        let s = stability_latency(&ts[..7], &[N, E, N, E, E, E, E], &truth);
        assert_eq!(s.latencies_ms, vec![300]);
        assert_eq!(s.max_ms, 300);

        let s = stability_latency(&ts[..3], &[E, E, N], &[E, E, E]);
        assert_eq!((s.detected, s.undetected), (0, 1));
    }

    #[test]
    fn latency_summary_statistics() {
        let s = LatencyStats::from_latencies(vec![0, 100, 200, 500], 1);
        assert_eq!(s.mean_ms, 200.0);
        assert!((s.std_ms - libm::sqrt(35000.0)).abs() < 1e-9);
        assert_eq!(s.max_ms, 500);
    }

    #[test]
    fn perfect_predictions_need_no_delay() {
        let truth = vec![N, N, E, E, E, E, N, N];
        let v = VideoPredictions {
            video_id: "a".into(),
            frame_period_ms: 100,
            timestamps_ms: (0..8).map(|i| i * 100).collect(),
            predicted: truth.clone(),
            truth,
        };
        let opt = optimize_delay(&[v]).unwrap();
        assert_eq!(opt.delay_ms, 0);
        assert_eq!(opt.curve.len(), DELAY_GRID_LEN);
        assert_eq!(opt.curve[0].f1, 1.0);
    }

    #[test]
    fn optimize_needs_emergency_truth() {
        let v = VideoPredictions {
            video_id: "a".into(),
            frame_period_ms: 100,
            timestamps_ms: vec![0, 100],
            predicted: vec![E, N],
            truth: vec![N, N],
        };
        assert_eq!(optimize_delay(&[v]), Err(StreamError::NoEmergencyTruth));
    }
}
