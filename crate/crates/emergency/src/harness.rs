//! Workflow commands behind the CLI verbs. Each writes its artifacts into
//! the configured output directory and returns a small summary.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use emergency_core::calibration::{Calibration, CalibrationError};
use emergency_core::classifiers::{grid_search_cv, ClassifierError, Family, GridSearchOutcome, HyperparameterSpec};
use emergency_core::data::{split_videos, DataError, Dataset, TransportMode, DEFAULT_FRAME_PERIOD_MS};
use emergency_core::metrics::render_table;
use emergency_core::pipeline::{calibrate, evaluate, out_of_fold_predictions, train_on_dataset, Detector, PipelineError};
use emergency_core::stream::{optimize_delay, EmergencyEvent, LatencyStats, StreamError};
use emergency_core::synth::{generate_dataset, ScenarioCount, ScenarioKind, SynthError, SynthPlan};
use emergency_core::tracking::{fuse_depth, TrackerConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::{
    self, calibration_curve_csv, delay_curve_csv, events_jsonl, file_sha256, predictions_csv, split_hash, write_json,
    write_text, ArtifactError, CalibrationFile, DelayFile, Provenance, ReportFile,
};
use crate::dataset_io::{load_dataset, load_stream, read_manifest, write_dataset, DatasetError};
use crate::depth_io::{read_depth_map, DepthError};
use crate::model_io::{load_model, save_model, ModelFile, SplitRecord};

pub const MODEL_FILE: &str = "model.json";
pub const CV_SUMMARY_FILE: &str = "cv_summary.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const CALIBRATION_CURVE_FILE: &str = "calibration_curve.csv";
pub const DELAY_FILE: &str = "delay.json";
pub const DELAY_CURVE_FILE: &str = "delay_curve.csv";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPLAY_EVENTS_FILE: &str = "replay_events.jsonl";
pub const REPLAY_DECISIONS_FILE: &str = "replay_decisions.csv";
pub const SYNTH_PLAN_FILE: &str = "synth_plan.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    MissingInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("refusing to evaluate: {0}")]
    Leakage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl HarnessError {
    /// 2 for missing inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::MissingInput(_) | HarnessError::Dataset(DatasetError::MissingManifest(_)) => 2,
            _ => 1,
        }
    }
}

fn default_folds() -> usize {
    5
}

fn default_test_fraction() -> f64 {
    0.31
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Settings shared by all commands; loadable from `--config` JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub mode: Option<TransportMode>,
    #[serde(default)]
    pub family: Option<Family>,
    /// JSON array of hyperparameter specs replacing the family's default grid.
    #[serde(default)]
    pub grid: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            mode: None,
            family: None,
            grid: None,
            seed: 0,
            folds: default_folds(),
            test_fraction: default_test_fraction(),
            out: default_out(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        if !path.is_file() {
            return Err(HarnessError::MissingInput(format!("config file {} not found", path.display())));
        }
        Ok(artifacts::read_json(path)?)
    }

    /// Location-independent part of the config, embedded in artifacts.
    fn recorded(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode,
            "family": self.family,
            "seed": self.seed,
            "folds": self.folds,
            "test_fraction": self.test_fraction,
        })
    }

    fn data_dir(&self) -> Result<&Path, HarnessError> {
        let dir = self.data.as_deref().ok_or_else(|| HarnessError::MissingInput("no dataset path given".into()))?;
        if !dir.is_dir() {
            return Err(HarnessError::MissingInput(format!("dataset path {} does not exist", dir.display())));
        }
        Ok(dir)
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), HarnessError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(HarnessError::MissingInput(format!("{what} {} not found", path.display())))
    }
}

/// Hash over the manifest and every frame file it lists.
fn dataset_hash(dir: &Path) -> Result<String, HarnessError> {
    let manifest = read_manifest(dir)?;
    let mut parts = vec![file_sha256(&dir.join(crate::dataset_io::MANIFEST_FILE))?];
    for v in &manifest.videos {
        let file = v.file.clone().unwrap_or_else(|| format!("{}.jsonl", v.id));
        parts.push(file_sha256(&dir.join(file))?);
    }
    Ok(artifacts::sha256_hex(parts.join("\n").as_bytes()))
}

fn select(dataset: &Dataset, ids: &[String]) -> Result<Dataset, HarnessError> {
    let indices = ids
        .iter()
        .map(|id| {
            dataset
                .video_ids()
                .position(|v| v == id)
                .ok_or_else(|| HarnessError::Config(format!("video {id} recorded in the model is not in the dataset")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(dataset.subset(&indices))
}

fn ids(dataset: &Dataset) -> Vec<String> {
    dataset.video_ids().map(String::from).collect()
}

// ---------------------------------------------------------------- synth

/// Default video mix for `mode`: normal, emergency and (for seated modes)
/// pause scenarios in a 2:2:1 ratio.
pub fn default_plan(mode: TransportMode, videos: usize, duration_frames: usize, noise_px: f64, dropout_rate: f64, seed: u64) -> SynthPlan {
    let kinds: &[ScenarioKind] = match mode {
        TransportMode::Walking => &[ScenarioKind::Walk, ScenarioKind::FallDuringWalk, ScenarioKind::Bystanders],
        TransportMode::Wheelchair => {
            &[ScenarioKind::SitWheelchair, ScenarioKind::SlumpUnconscious, ScenarioKind::StandUpPause]
        }
        TransportMode::Combined => &[
            ScenarioKind::Walk,
            ScenarioKind::FallDuringWalk,
            ScenarioKind::Bystanders,
            ScenarioKind::SitWheelchair,
            ScenarioKind::SlumpUnconscious,
            ScenarioKind::StandUpPause,
        ],
    };
    let weights: Vec<usize> = kinds.iter().map(|k| if matches!(k, ScenarioKind::Bystanders | ScenarioKind::StandUpPause) { 1 } else { 2 }).collect();
    let total: usize = weights.iter().sum();
    let mut counts: Vec<usize> = weights.iter().map(|w| videos * w / total).collect();
    let n = counts.len();
    let mut i = 0;
    while counts.iter().sum::<usize>() < videos {
        counts[i % n] += 1;
        i += 1;
    }
    SynthPlan {
        mode,
        duration_frames,
        noise_px,
        dropout_rate,
        seed,
        scenarios: kinds.iter().zip(counts).map(|(&kind, count)| ScenarioCount { kind, count }).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub videos: usize,
    pub frames: usize,
}

pub fn cmd_synth(plan: &SynthPlan, out: &Path) -> Result<SynthSummary, HarnessError> {
    let dataset = generate_dataset(plan)?;
    write_dataset(out, &dataset)?;
    write_json(&out.join(SYNTH_PLAN_FILE), plan)?;
    Ok(SynthSummary { videos: dataset.sequences.len(), frames: dataset.total_frames() })
}

pub fn load_plan(path: &Path) -> Result<SynthPlan, HarnessError> {
    require_file(path, "synth plan")?;
    Ok(artifacts::read_json(path)?)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: usize,
    pub seed: u64,
    pub outcome: GridSearchOutcome,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub best: HyperparameterSpec,
    pub cv_recall: f64,
    pub train_videos: usize,
    pub test_videos: usize,
}

fn train_test_split(dir: &Path, dataset: &Dataset, cfg: &RunConfig) -> Result<(Dataset, Dataset, Option<f64>), HarnessError> {
    let manifest = read_manifest(dir)?;
    let flag = |id: &str| manifest.videos.iter().find(|v| v.id == id).and_then(|v| v.split.clone());
    let flags: Vec<Option<String>> = dataset.video_ids().map(flag).collect();
    if flags.iter().all(Option::is_some) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..flags.len()).partition(|&i| flags[i].as_deref() == Some("test"));
        if !test.is_empty() && !train.is_empty() {
            return Ok((dataset.subset(&train), dataset.subset(&test), None));
        }
    }
    let (train, test) = split_videos(dataset, cfg.test_fraction, cfg.seed)?;
    Ok((train, test, Some(cfg.test_fraction)))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, HarnessError> {
    let dir = cfg.data_dir()?;
    let mode = cfg.mode.ok_or_else(|| HarnessError::Config("--mode is required".into()))?;
    let dataset = load_dataset(dir, mode)?;
    let (train, test, fraction) = train_test_split(dir, &dataset, cfg)?;

    let mut provenance = Provenance::new("train", cfg.seed, cfg.recorded()).with_input("dataset", dataset_hash(dir)?);
    let grid: Vec<HyperparameterSpec> = match &cfg.grid {
        Some(path) => {
            require_file(path, "grid file")?;
            provenance = provenance.with_input("grid", file_sha256(path)?);
            artifacts::read_json(path)?
        }
        None => cfg.family.ok_or_else(|| HarnessError::Config("--family or --grid is required".into()))?.default_grid(),
    };

    let tracker = TrackerConfig::default();
    let outcome = grid_search_cv(&grid, &train, cfg.folds, cfg.seed, &tracker)?;
    let model = train_on_dataset(&outcome.best, &train, &tracker, cfg.seed)?;

    let split = SplitRecord {
        test_fraction: fraction,
        seed: cfg.seed,
        train_videos: ids(&train),
        test_videos: ids(&test),
        train_hash: split_hash(&train),
        test_hash: split_hash(&test),
    };
    let summary = TrainSummary {
        best: outcome.best.clone(),
        cv_recall: outcome.scores[outcome.best_index].mean_recall,
        train_videos: train.sequences.len(),
        test_videos: test.sequences.len(),
    };
    let cv = CvSummary { folds: cfg.folds, seed: cfg.seed, outcome, provenance: provenance.clone() };
    write_json(&cfg.out_path(CV_SUMMARY_FILE), &cv)?;
    save_model(&cfg.out_path(MODEL_FILE), &ModelFile::new(mode, model, split, provenance))?;
    Ok(summary)
}

// ---------------------------------------------------------------- calibrate

fn load_inputs(cfg: &RunConfig, model_path: &Path) -> Result<(ModelFile, Dataset), HarnessError> {
    let dir = cfg.data_dir()?;
    require_file(model_path, "model file")?;
    let model = load_model(model_path)?;
    let dataset = load_dataset(dir, model.mode)?;
    Ok((model, dataset))
}

fn train_split(model: &ModelFile, dataset: &Dataset) -> Result<Dataset, HarnessError> {
    let train = select(dataset, &model.split.train_videos)?;
    if split_hash(&train) != model.split.train_hash {
        return Err(HarnessError::Config("training videos changed since the model was trained".into()));
    }
    Ok(train)
}

pub fn cmd_calibrate(cfg: &RunConfig, model_path: &Path) -> Result<Calibration, HarnessError> {
    let (model, dataset) = load_inputs(cfg, model_path)?;
    let train = train_split(&model, &dataset)?;
    let calibration = calibrate(&model.model, &train, &TrackerConfig::default())?;
    let provenance = Provenance::new("calibrate", cfg.seed, cfg.recorded()).with_input("model", file_sha256(model_path)?);
    let file = CalibrationFile::new(calibration.clone(), split_hash(&train), provenance);
    write_json(&cfg.out_path(CALIBRATION_FILE), &file)?;
    write_text(&cfg.out_path(CALIBRATION_CURVE_FILE), &calibration_curve_csv(&calibration))?;
    Ok(calibration)
}

// ---------------------------------------------------------------- tune-delay

pub fn cmd_tune_delay(cfg: &RunConfig, model_path: &Path, calibration_path: &Path) -> Result<DelayFile, HarnessError> {
    let (model, dataset) = load_inputs(cfg, model_path)?;
    require_file(calibration_path, "calibration file")?;
    let calibration = CalibrationFile::load(calibration_path)?;
    let train = train_split(&model, &dataset)?;
    if calibration.split_hash != split_hash(&train) {
        return Err(HarnessError::Config("calibration was fitted on other videos than the model's training split".into()));
    }
    // held-out folds of the training split show the errors of unseen videos
    let predictions = out_of_fold_predictions(&model.model.spec, &train, cfg.folds, cfg.seed, &TrackerConfig::default())?;
    let optimum = optimize_delay(&predictions)?;
    let f1 = optimum.curve.iter().find(|p| p.delay_ms == optimum.delay_ms).map_or(0.0, |p| p.f1);
    let period = train.sequences.first().map_or(DEFAULT_FRAME_PERIOD_MS, |v| v.frame_period_ms);
    let provenance = Provenance::new("tune-delay", cfg.seed, cfg.recorded())
        .with_input("model", file_sha256(model_path)?)
        .with_input("calibration", file_sha256(calibration_path)?);
    let file = DelayFile::new(optimum.delay_ms, period, f1, split_hash(&train), provenance);
    write_json(&cfg.out_path(DELAY_FILE), &file)?;
    write_text(&cfg.out_path(DELAY_CURVE_FILE), &delay_curve_csv(&optimum.curve))?;
    Ok(file)
}

// ---------------------------------------------------------------- evaluate

pub fn cmd_evaluate(
    cfg: &RunConfig,
    model_path: &Path,
    calibration_path: &Path,
    delay_path: &Path,
) -> Result<ReportFile, HarnessError> {
    let (model, dataset) = load_inputs(cfg, model_path)?;
    require_file(calibration_path, "calibration file")?;
    require_file(delay_path, "delay file")?;
    let calibration = CalibrationFile::load(calibration_path)?;
    let delay = DelayFile::load(delay_path)?;

    let test = select(&dataset, &model.split.test_videos)?;
    let test_hash = split_hash(&test);
    if calibration.split_hash == test_hash {
        return Err(HarnessError::Leakage("calibration was fitted on the test split".into()));
    }
    if delay.split_hash == test_hash {
        return Err(HarnessError::Leakage("delay was tuned on the test split".into()));
    }

    let name = format!("{} {}", model.model.family().short_name(), model.mode.as_str());
    let evaluation = evaluate(&model.model, Some(&calibration.calibration), delay.delay_ms, &test, &TrackerConfig::default(), &name)?;
    let provenance = Provenance::new("evaluate", cfg.seed, cfg.recorded())
        .with_input("model", file_sha256(model_path)?)
        .with_input("calibration", file_sha256(calibration_path)?)
        .with_input("delay", file_sha256(delay_path)?);
    let file = ReportFile::new(evaluation.report, test_hash, provenance);
    write_json(&cfg.out_path(REPORT_FILE), &file)?;
    write_text(&cfg.out_path(REPORT_TABLE_FILE), &render_table(std::slice::from_ref(&file.report)))?;
    write_text(&cfg.out_path(EVENTS_FILE), &events_jsonl(evaluation.traces.iter().flat_map(|t| &t.events)))?;
    write_text(&cfg.out_path(PREDICTIONS_FILE), &predictions_csv(&evaluation.traces))?;
    Ok(file)
}

// ---------------------------------------------------------------- replay

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOptions {
    /// Sleep so frames are processed at their recorded timestamps.
    pub paced: bool,
    /// Directory of `<t>.dmap` depth maps fused into every skeleton.
    pub depth_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub frames: usize,
    pub events: Vec<EmergencyEvent>,
    pub committed: Vec<u8>,
    pub mean_frame_latency_us: f64,
    pub max_frame_latency_us: f64,
    pub frames_per_second: f64,
    /// Stability latency against the stream's own labels.
    pub stability: LatencyStats,
}

pub fn cmd_replay(
    cfg: &RunConfig,
    model_path: &Path,
    calibration_path: &Path,
    delay_path: &Path,
    stream_path: &Path,
    options: &ReplayOptions,
) -> Result<ReplaySummary, HarnessError> {
    require_file(model_path, "model file")?;
    require_file(calibration_path, "calibration file")?;
    require_file(delay_path, "delay file")?;
    require_file(stream_path, "stream file")?;
    let model = load_model(model_path)?;
    let calibration = CalibrationFile::load(calibration_path)?;
    let delay = DelayFile::load(delay_path)?;
    let frames = load_stream(stream_path)?;
    let video_id = stream_path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());

    let mut detector = Detector::new(
        &model.model,
        Some(&calibration.calibration),
        delay.delay_ms,
        delay.frame_period_ms,
        TrackerConfig::default(),
        &video_id,
    );
    let mut events = Vec::new();
    let mut committed = Vec::with_capacity(frames.len());
    let mut raw = Vec::with_capacity(frames.len());
    let mut latencies = Vec::with_capacity(frames.len());
    let started = Instant::now();
    let t0 = frames.first().map_or(0, |f| f.timestamp_ms);

    for frame in &frames {
        if options.paced {
            let due = Duration::from_millis((frame.timestamp_ms - t0).max(0) as u64);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let begin = Instant::now();
        let decision = match &options.depth_dir {
            Some(dir) => {
                let path = dir.join(format!("{}.dmap", frame.timestamp_ms));
                let mut fused = frame.clone();
                if path.is_file() {
                    let map = read_depth_map(&path)?;
                    for s in fused.skeletons.iter_mut() {
                        if let Ok(f) = fuse_depth(s, &map) {
                            *s = f;
                        }
                    }
                }
                detector.step(&fused)?
            }
            None => detector.step(frame)?,
        };
        latencies.push(begin.elapsed());
        raw.push(decision.raw);
        committed.push(decision.committed);
        events.extend(decision.event);
    }
    let elapsed = started.elapsed();

    let mut decisions = String::from("t_ms,raw,committed\n");
    for ((f, r), c) in frames.iter().zip(&raw).zip(&committed) {
        decisions.push_str(&format!("{},{},{}\n", f.timestamp_ms, r.id(), c.id()));
    }
    write_text(&cfg.out_path(REPLAY_EVENTS_FILE), &events_jsonl(&events))?;
    write_text(&cfg.out_path(REPLAY_DECISIONS_FILE), &decisions)?;

    let micros: Vec<f64> = latencies.iter().map(|d| d.as_secs_f64() * 1e6).collect();
    let truth: Vec<_> = frames.iter().map(|f| f.label).collect();
    let timestamps: Vec<i64> = frames.iter().map(|f| f.timestamp_ms).collect();
    let stability = if truth.iter().any(|l| l.is_emergency()) {
        emergency_core::stream::stability_latency(&timestamps, &raw, &truth)
    } else {
        LatencyStats::default()
    };
    Ok(ReplaySummary {
        frames: frames.len(),
        events,
        committed: committed.iter().map(|c| c.id()).collect(),
        mean_frame_latency_us: if micros.is_empty() { 0.0 } else { micros.iter().sum::<f64>() / micros.len() as f64 },
        max_frame_latency_us: micros.iter().copied().fold(0.0, f64::max),
        frames_per_second: if elapsed.is_zero() { f64::INFINITY } else { frames.len() as f64 / elapsed.as_secs_f64() },
        stability,
    })
}
