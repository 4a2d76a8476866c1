//! The end-to-end chain per frame: patient selection, features, scores,
//! softmax, threshold, delay filter, events. Also the sample extraction used
//! for training and the evaluation that produces a report row.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{classify_with_threshold, softmax, Calibration, CalibrationError};
use crate::classifiers::{ClassifierError, TrainedModel};
use crate::data::{kfold_videos, ClassLabel, DataError, Dataset, PoseFrame, TransportMode, VideoSequence};
use crate::features::{extract_features, FeatureVector};
use crate::metrics::{all_labels, confusion, micro_metrics, EvaluationReport, MetricsError, Ratio};
use crate::stream::{
    detect_events, emergency_counts, stability_latency, DelayFilter, EmergencyEvent, EventTracker, LatencyStats,
    VideoPredictions,
};
use crate::tracking::{select_patient, TrackState, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("model has {model} classes but the {mode} mode needs {expected}")]
    ClassCountMismatch { model: usize, mode: TransportMode, expected: usize },
}

/// Labeled feature vectors of one video; frames without a usable patient
/// are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSamples {
    pub frame_indices: Vec<usize>,
    pub features: Vec<FeatureVector>,
    pub labels: Vec<ClassLabel>,
}

pub fn video_samples(video: &VideoSequence, tracker: &TrackerConfig) -> VideoSamples {
    let mut state = TrackState::new(tracker.lock_timeout_ms);
    let mut out = VideoSamples { frame_indices: Vec::new(), features: Vec::new(), labels: Vec::new() };
    for (i, frame) in video.frames.iter().enumerate() {
        let (patient, next) = select_patient(frame, &state, tracker.gate_px);
        state = next;
        if let Some(fv) = patient.as_ref().and_then(|p| extract_features(p).ok()) {
            out.frame_indices.push(i);
            out.features.push(fv);
            out.labels.push(frame.label);
        }
    }
    out
}

pub fn dataset_samples(dataset: &Dataset, tracker: &TrackerConfig) -> Vec<VideoSamples> {
    dataset.sequences.iter().map(|v| video_samples(v, tracker)).collect()
}

/// Flattens the samples of the selected videos into training arrays.
pub fn pooled<'a>(samples: &'a [VideoSamples], videos: &[usize]) -> (Vec<&'a [f64]>, Vec<ClassLabel>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &v in videos {
        x.extend(samples[v].features.iter().map(|f| f.as_slice()));
        y.extend_from_slice(&samples[v].labels);
    }
    (x, y)
}

pub fn train_on_dataset(
    spec: &crate::classifiers::HyperparameterSpec,
    dataset: &Dataset,
    tracker: &TrackerConfig,
    seed: u64,
) -> Result<TrainedModel, ClassifierError> {
    let samples = dataset_samples(dataset, tracker);
    let all: Vec<usize> = (0..samples.len()).collect();
    let (x, y) = pooled(&samples, &all);
    crate::classifiers::train(spec, &x, &y, dataset.mode.n_classes(), seed)
}

/// Output of [`Detector::step`] for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDecision {
    /// Softmax probabilities; `None` when no patient features were available.
    pub probabilities: Option<Vec<f64>>,
    pub raw: ClassLabel,
    pub committed: ClassLabel,
    pub event: Option<EmergencyEvent>,
}

/// Streaming detector for one video.
///
/// Frames without a selectable patient (or with too few keypoints) repeat
/// the previous raw classification, starting from Normal.
pub struct Detector<'m> {
    model: &'m TrainedModel,
    calibration: Option<&'m Calibration>,
    tracker: TrackerConfig,
    track: TrackState,
    filter: DelayFilter,
    events: EventTracker,
    last_raw: ClassLabel,
    video_id: String,
}

impl<'m> Detector<'m> {
    pub fn new(
        model: &'m TrainedModel,
        calibration: Option<&'m Calibration>,
        delay_ms: u32,
        frame_period_ms: u32,
        tracker: TrackerConfig,
        video_id: &str,
    ) -> Self {
        Detector {
            model,
            calibration,
            tracker,
            track: TrackState::new(tracker.lock_timeout_ms),
            filter: DelayFilter::new(delay_ms, frame_period_ms),
            events: EventTracker::new(),
            last_raw: ClassLabel::Normal,
            video_id: video_id.into(),
        }
    }

    pub fn step(&mut self, frame: &PoseFrame) -> Result<FrameDecision, PipelineError> {
        let (patient, next) = select_patient(frame, &self.track, self.tracker.gate_px);
        self.track = next;
        let probabilities = match patient.as_ref().and_then(|p| extract_features(p).ok()) {
            Some(fv) => Some(softmax(&self.model.decision_scores(&fv)?)?),
            None => None,
        };
        let raw = match &probabilities {
            Some(p) => classify_with_threshold(p, self.calibration),
            None => self.last_raw,
        };
        self.last_raw = raw;
        let committed = self.filter.step(raw);
        let event = self.events.step(&self.video_id, frame.timestamp_ms, raw, committed);
        Ok(FrameDecision { probabilities, raw, committed, event })
    }
}

/// Per-frame record of a processed video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTrace {
    pub video_id: String,
    pub frame_period_ms: u32,
    pub timestamps_ms: Vec<i64>,
    pub truth: Vec<ClassLabel>,
    pub raw: Vec<ClassLabel>,
    pub committed: Vec<ClassLabel>,
    pub events: Vec<EmergencyEvent>,
}

impl VideoTrace {
    pub fn predictions(&self) -> VideoPredictions {
        VideoPredictions {
            video_id: self.video_id.clone(),
            frame_period_ms: self.frame_period_ms,
            timestamps_ms: self.timestamps_ms.clone(),
            predicted: self.raw.clone(),
            truth: self.truth.clone(),
        }
    }
}

pub fn run_video(
    model: &TrainedModel,
    calibration: Option<&Calibration>,
    delay_ms: u32,
    video: &VideoSequence,
    tracker: &TrackerConfig,
) -> Result<VideoTrace, PipelineError> {
    let mut detector = Detector::new(model, calibration, delay_ms, video.frame_period_ms, *tracker, &video.video_id);
    let mut trace = VideoTrace {
        video_id: video.video_id.clone(),
        frame_period_ms: video.frame_period_ms,
        timestamps_ms: Vec::with_capacity(video.len()),
        truth: Vec::with_capacity(video.len()),
        raw: Vec::with_capacity(video.len()),
        committed: Vec::with_capacity(video.len()),
        events: Vec::new(),
    };
    for frame in &video.frames {
        let decision = detector.step(frame)?;
        trace.timestamps_ms.push(frame.timestamp_ms);
        trace.truth.push(frame.label);
        trace.raw.push(decision.raw);
        trace.committed.push(decision.committed);
        trace.events.extend(decision.event);
    }
    Ok(trace)
}

/// Undelayed raw predictions for every video, as input to delay tuning.
pub fn raw_predictions(
    model: &TrainedModel,
    calibration: Option<&Calibration>,
    dataset: &Dataset,
    tracker: &TrackerConfig,
) -> Result<Vec<VideoPredictions>, PipelineError> {
    dataset
        .sequences
        .iter()
        .map(|v| run_video(model, calibration, 0, v, tracker).map(|t| t.predictions()))
        .collect()
}

/// Undelayed raw predictions for every video from a model that never saw
/// it: per video-level fold, `spec` is trained and calibrated on the other
/// folds. A fold whose training part cannot be calibrated uses argmax.
pub fn out_of_fold_predictions(
    spec: &crate::classifiers::HyperparameterSpec,
    dataset: &Dataset,
    k: usize,
    seed: u64,
    tracker: &TrackerConfig,
) -> Result<Vec<VideoPredictions>, PipelineError> {
    let mut out: Vec<Option<VideoPredictions>> = alloc::vec![None; dataset.sequences.len()];
    for fold in kfold_videos(dataset, k, seed)? {
        let train = dataset.subset(&fold.train);
        let model = train_on_dataset(spec, &train, tracker, seed)?;
        let calibration = match calibrate(&model, &train, tracker) {
            Ok(c) => Some(c),
            Err(PipelineError::Calibration(_)) => None,
            Err(e) => return Err(e),
        };
        for &v in &fold.validation {
            let trace = run_video(&model, calibration.as_ref(), 0, &dataset.sequences[v], tracker)?;
            out[v] = Some(trace.predictions());
        }
    }
    Ok(out.into_iter().flatten().collect())
}

/// Decision scores and labels of every usable training frame, as input to
/// threshold calibration.
pub fn scored_samples(
    model: &TrainedModel,
    dataset: &Dataset,
    tracker: &TrackerConfig,
) -> Result<(Vec<Vec<f64>>, Vec<ClassLabel>), PipelineError> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for samples in dataset_samples(dataset, tracker) {
        for (fv, label) in samples.features.iter().zip(samples.labels) {
            scores.push(model.decision_scores(fv)?);
            labels.push(label);
        }
    }
    Ok((scores, labels))
}

/// Threshold calibration matching the dataset mode: Youden's J for binary
/// datasets, the emergency grid scan otherwise.
pub fn calibrate(model: &TrainedModel, dataset: &Dataset, tracker: &TrackerConfig) -> Result<Calibration, PipelineError> {
    let (scores, labels) = scored_samples(model, dataset, tracker)?;
    if dataset.mode.is_binary() {
        let probs = scores
            .iter()
            .map(|s| softmax(s).map(|p| p[ClassLabel::Emergency.index()]))
            .collect::<Result<Vec<_>, _>>()?;
        let positives: Vec<bool> = labels.iter().map(|l| l.is_emergency()).collect();
        Ok(crate::calibration::youden_threshold(&probs, &positives)?)
    } else {
        Ok(crate::calibration::emergency_threshold(&scores, &labels)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub traces: Vec<VideoTrace>,
}

/// Runs the full chain over the test videos and fills a report row.
/// Recall and F1 are taken before the delay filter; the FP/FN ratios
/// compare counts after the filter to counts before it.
pub fn evaluate(
    model: &TrainedModel,
    calibration: Option<&Calibration>,
    delay_ms: u32,
    test: &Dataset,
    tracker: &TrackerConfig,
    model_name: &str,
) -> Result<Evaluation, PipelineError> {
    let expected = test.mode.n_classes();
    if model.n_classes != expected {
        return Err(PipelineError::ClassCountMismatch { model: model.n_classes, mode: test.mode, expected });
    }
    let traces = test
        .sequences
        .iter()
        .map(|v| run_video(model, calibration, delay_ms, v, tracker))
        .collect::<Result<Vec<_>, _>>()?;

    let truth: Vec<ClassLabel> = traces.iter().flat_map(|t| t.truth.iter().copied()).collect();
    let raw: Vec<ClassLabel> = traces.iter().flat_map(|t| t.raw.iter().copied()).collect();
    let committed: Vec<ClassLabel> = traces.iter().flat_map(|t| t.committed.iter().copied()).collect();

    let n_classes = model.n_classes;
    let cm = confusion(&raw, &truth, n_classes)?;
    let cm_delayed = confusion(&committed, &truth, n_classes)?;
    let emergency = micro_metrics(&cm, &[ClassLabel::Emergency])?;
    let emergency_delayed = micro_metrics(&cm_delayed, &[ClassLabel::Emergency])?;
    let overall = micro_metrics(&cm, &all_labels(n_classes))?;
    let (_, fp, fn_) = emergency_counts(&raw, &truth);
    let (_, fp_delayed, fn_delayed) = emergency_counts(&committed, &truth);

    let latency = LatencyStats::merge(
        &traces.iter().map(|t| stability_latency(&t.timestamps_ms, &t.raw, &t.truth)).collect::<Vec<_>>(),
    );
    let events = traces
        .iter()
        .map(|t| detect_events(&t.video_id, &t.timestamps_ms, &t.raw, &t.committed).len())
        .sum();

    let report = EvaluationReport {
        model_name: model_name.into(),
        mode: test.mode,
        recall: emergency.recall,
        f1: emergency.f1,
        precision: emergency.precision,
        recall_all_classes: overall.recall,
        f1_all_classes: overall.f1,
        threshold: calibration.and_then(|c| c.threshold),
        delay_ms,
        fp,
        fn_,
        fp_delayed,
        fn_delayed,
        fp_ratio: Ratio::of(fp_delayed, fp),
        fn_ratio: Ratio::of(fn_delayed, fn_),
        recall_delayed: emergency_delayed.recall,
        f1_delayed: emergency_delayed.f1,
        confusion: cm,
        confusion_delayed: cm_delayed,
        latency,
        events,
        n_videos: traces.len(),
        n_frames: truth.len(),
    };
    Ok(Evaluation { report, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{Gamma, HyperparameterSpec, KernelKind, SvmParams};
    use crate::synth::{generate_dataset, ScenarioCount, ScenarioKind, SynthPlan};
    use alloc::vec;

    fn walking(videos: usize) -> Dataset {
        generate_dataset(&SynthPlan {
            mode: TransportMode::Walking,
            duration_frames: 30,
            noise_px: 1.0,
            dropout_rate: 0.0,
            seed: 2,
            scenarios: vec![
                ScenarioCount { kind: ScenarioKind::Walk, count: videos / 2 },
                ScenarioCount { kind: ScenarioKind::FallDuringWalk, count: videos - videos / 2 },
            ],
        })
        .unwrap()
    }

    fn spec() -> HyperparameterSpec {
        HyperparameterSpec::Svm(SvmParams { c: 10.0, kernel: KernelKind::Rbf, degree: 2, gamma: Gamma::Value(0.5) })
    }

    #[test]
    fn out_of_fold_predictions_cover_every_video_in_order() {
        let data = walking(9);
        let preds = out_of_fold_predictions(&spec(), &data, 3, 1, &TrackerConfig::default()).unwrap();
        assert_eq!(preds.len(), 9);
        for (p, v) in preds.iter().zip(&data.sequences) {
            assert_eq!(p.video_id, v.video_id);
            assert_eq!(p.predicted.len(), v.len());
        }
        assert!(matches!(
            out_of_fold_predictions(&spec(), &data, 20, 1, &TrackerConfig::default()),
            Err(PipelineError::Data(DataError::TooFewVideos { .. }))
        ));
    }

    #[test]
    fn frames_without_a_patient_repeat_the_previous_raw_label() {
        let data = walking(6);
        let model = train_on_dataset(&spec(), &data, &TrackerConfig::default(), 0).unwrap();
        let fall = data.sequences.iter().find(|v| v.video_id.starts_with("fall")).unwrap();
        let last = fall.frames.last().unwrap();
        let mut detector = Detector::new(&model, None, 0, 100, TrackerConfig::default(), "v");
        let empty = PoseFrame { skeletons: vec![], ..last.clone() };
        assert_eq!(detector.step(&empty).unwrap().raw, ClassLabel::Normal);
        let seen = detector.step(last).unwrap();
        assert!(seen.probabilities.is_some());
        let held = detector.step(&empty).unwrap();
        assert_eq!(held.probabilities, None);
        assert_eq!(held.raw, seen.raw);
    }

    #[test]
    fn evaluate_rejects_a_model_for_another_mode() {
        let data = walking(4);
        let model = train_on_dataset(&spec(), &data, &TrackerConfig::default(), 0).unwrap();
        let other = Dataset { mode: TransportMode::Wheelchair, ..data };
        assert!(matches!(
            evaluate(&model, None, 0, &other, &TrackerConfig::default(), "m"),
            Err(PipelineError::ClassCountMismatch { .. })
        ));
    }
}
