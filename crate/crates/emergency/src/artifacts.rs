//! Output files of the harness: versioned JSON artifacts with provenance,
//! curve CSVs, event logs and per-frame prediction logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use emergency_core::calibration::Calibration;
use emergency_core::data::Dataset;
use emergency_core::metrics::EvaluationReport;
use emergency_core::pipeline::VideoTrace;
use emergency_core::stream::{DelayPoint, EmergencyEvent};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: expected {expected} version {version}, found {found}")]
    Format { path: PathBuf, expected: &'static str, version: u32, found: String },
    #[error("model expects {found} features, this build extracts {expected}")]
    FeatureMismatch { expected: usize, found: usize },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path).map_err(|source| ArtifactError::Io { path: path.into(), source })?;
    Ok(sha256_hex(&bytes))
}

/// Content hash of a set of videos: ids, lengths and labels, order-independent.
pub fn split_hash(dataset: &Dataset) -> String {
    let mut lines: Vec<String> = dataset
        .sequences
        .iter()
        .map(|v| {
            let labels: String = v.labels().map(|l| char::from(b'0' + l.id())).collect();
            format!("{}\t{}\t{}", v.video_id, v.len(), labels)
        })
        .collect();
    lines.sort();
    sha256_hex(lines.join("\n").as_bytes())
}

/// Where an artifact came from: enough to reproduce it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Input name to SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            inputs: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, name: &str, hash: String) -> Self {
        self.inputs.insert(name.into(), hash);
        self
    }
}

/// Serializes as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| ArtifactError::Json { path: path.into(), source })?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let text = fs::read_to_string(path).map_err(|source| ArtifactError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| ArtifactError::Json { path: path.into(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ArtifactError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| ArtifactError::Io { path: parent.into(), source })?;
    }
    fs::write(path, text).map_err(|source| ArtifactError::Io { path: path.into(), source })
}

pub(crate) fn check_format(path: &Path, format: &str, version: u32, expected: &'static str, current: u32) -> Result<(), ArtifactError> {
    if format != expected || version != current {
        return Err(ArtifactError::Format {
            path: path.into(),
            expected,
            version: current,
            found: format!("{format} version {version}"),
        });
    }
    Ok(())
}

pub const CALIBRATION_FORMAT: &str = "emergency-calibration";
pub const DELAY_FORMAT: &str = "emergency-delay";
pub const REPORT_FORMAT: &str = "emergency-report";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub format: String,
    pub version: u32,
    pub calibration: Calibration,
    /// Hash of the videos the threshold was fitted on.
    pub split_hash: String,
    pub provenance: Provenance,
}

impl CalibrationFile {
    pub fn new(calibration: Calibration, split_hash: String, provenance: Provenance) -> Self {
        CalibrationFile { format: CALIBRATION_FORMAT.into(), version: ARTIFACT_VERSION, calibration, split_hash, provenance }
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let f: Self = read_json(path)?;
        check_format(path, &f.format, f.version, CALIBRATION_FORMAT, ARTIFACT_VERSION)?;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayFile {
    pub format: String,
    pub version: u32,
    pub delay_ms: u32,
    pub frame_period_ms: u32,
    /// Pooled Emergency F1 at `delay_ms` on the tuning videos.
    pub f1: f64,
    pub split_hash: String,
    pub provenance: Provenance,
}

impl DelayFile {
    pub fn new(delay_ms: u32, frame_period_ms: u32, f1: f64, split_hash: String, provenance: Provenance) -> Self {
        DelayFile { format: DELAY_FORMAT.into(), version: ARTIFACT_VERSION, delay_ms, frame_period_ms, f1, split_hash, provenance }
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let f: Self = read_json(path)?;
        check_format(path, &f.format, f.version, DELAY_FORMAT, ARTIFACT_VERSION)?;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub version: u32,
    pub report: EvaluationReport,
    pub test_split_hash: String,
    pub provenance: Provenance,
}

impl ReportFile {
    pub fn new(report: EvaluationReport, test_split_hash: String, provenance: Provenance) -> Self {
        ReportFile { format: REPORT_FORMAT.into(), version: ARTIFACT_VERSION, report, test_split_hash, provenance }
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let f: Self = read_json(path)?;
        check_format(path, &f.format, f.version, REPORT_FORMAT, ARTIFACT_VERSION)?;
        Ok(f)
    }
}

/// `threshold,objective,tpr,fpr,precision`
pub fn calibration_curve_csv(calibration: &Calibration) -> String {
    let mut out = String::from("threshold,objective,tpr,fpr,precision\n");
    for p in &calibration.curve {
        let _ = writeln!(out, "{},{},{},{},{}", p.threshold, p.objective, p.tpr, p.fpr, p.precision);
    }
    out
}

/// `d_ms,f1,fp,fn`
pub fn delay_curve_csv(curve: &[DelayPoint]) -> String {
    let mut out = String::from("d_ms,f1,fp,fn\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{},{}", p.delay_ms, p.f1, p.fp, p.fn_);
    }
    out
}

pub fn event_line(event: &EmergencyEvent) -> String {
    json!({
        "video": event.video_id,
        "trigger_ms": event.trigger_timestamp_ms,
        "first_raw_ms": event.first_raw_timestamp_ms,
    })
    .to_string()
}

pub fn events_jsonl<'a>(events: impl IntoIterator<Item = &'a EmergencyEvent>) -> String {
    events.into_iter().map(|e| event_line(e) + "\n").collect()
}

#[derive(Debug, Deserialize)]
struct EventRecord {
    video: String,
    trigger_ms: i64,
    first_raw_ms: i64,
}

pub fn parse_events_jsonl(text: &str) -> Result<Vec<EmergencyEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let r: EventRecord = serde_json::from_str(l)?;
            Ok(EmergencyEvent { video_id: r.video, trigger_timestamp_ms: r.trigger_ms, first_raw_timestamp_ms: r.first_raw_ms })
        })
        .collect()
}

/// `video,t_ms,truth,raw,committed` with numeric class ids.
pub fn predictions_csv(traces: &[VideoTrace]) -> String {
    let mut out = String::from("video,t_ms,truth,raw,committed\n");
    for t in traces {
        for i in 0..t.timestamps_ms.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                t.video_id,
                t.timestamps_ms[i],
                t.truth[i].id(),
                t.raw[i].id(),
                t.committed[i].id()
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use emergency_core::data::{ClassLabel, PoseFrame, TransportMode, VideoSequence};

    fn video(id: &str, labels: &[u8]) -> VideoSequence {
        VideoSequence {
            video_id: id.into(),
            frames: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| PoseFrame {
                    timestamp_ms: i as i64 * 100,
                    skeletons: vec![],
                    marker_px: None,
                    label: ClassLabel::try_from(l).unwrap(),
                })
                .collect(),
            mode: TransportMode::Walking,
            frame_period_ms: 100,
            camera: String::new(),
            location: String::new(),
        }
    }

    #[test]
    fn split_hash_ignores_order_but_not_content() {
        let a = Dataset { sequences: vec![video("a", &[0, 1]), video("b", &[0])], mode: TransportMode::Walking };
        let b = Dataset { sequences: vec![video("b", &[0]), video("a", &[0, 1])], mode: TransportMode::Walking };
        let c = Dataset { sequences: vec![video("b", &[0]), video("a", &[0, 0])], mode: TransportMode::Walking };
        assert_eq!(split_hash(&a), split_hash(&b));
        assert_ne!(split_hash(&a), split_hash(&c));
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn event_log_round_trip() {
        let events = vec![
            EmergencyEvent { video_id: "v1".into(), trigger_timestamp_ms: 900, first_raw_timestamp_ms: 700 },
            EmergencyEvent { video_id: "v2".into(), trigger_timestamp_ms: 100, first_raw_timestamp_ms: 100 },
        ];
        let text = events_jsonl(&events);
        assert_eq!(text.lines().next().unwrap(), r#"{"first_raw_ms":700,"trigger_ms":900,"video":"v1"}"#);
        assert_eq!(parse_events_jsonl(&text).unwrap(), events);
    }

    #[test]
    fn curve_csv_headers() {
        let curve = [DelayPoint { delay_ms: 0, f1: 0.5, fp: 3, fn_: 1 }];
        assert_eq!(delay_curve_csv(&curve), "d_ms,f1,fp,fn\n0,0.5,3,1\n");
    }
}
