//! Dataset directories: a `manifest.json` plus one `<video id>.jsonl` per video.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use emergency_core::data::{Dataset, TransportMode, VideoSequence, DEFAULT_FRAME_PERIOD_MS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{parse_frame_record_with, serialize_frame_record, FieldMapping, RecordError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no {MANIFEST_FILE} in {0}")]
    MissingManifest(PathBuf),
    #[error("video {video}: manifest lists {manifest} frames, file holds {parsed}")]
    InconsistentCount { video: String, manifest: usize, parsed: usize },
    #[error("video {video} line {line}: {source}")]
    Record {
        video: String,
        line: usize,
        #[source]
        source: RecordError,
    },
    #[error("duplicate video id {0}")]
    DuplicateVideo(String),
    #[error("no {0} videos in dataset")]
    NoVideos(&'static str),
    #[error("bad manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestVideo {
    pub id: String,
    pub frames: usize,
    #[serde(default = "default_period")]
    pub frame_period_ms: u32,
    /// Overrides the dataset mode for this video (combined datasets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<TransportMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    /// Original split flag ("train" / "test") when the source provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Frame file relative to the manifest; defaults to `<id>.jsonl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

fn default_period() -> u32 {
    DEFAULT_FRAME_PERIOD_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: TransportMode,
    pub videos: Vec<ManifestVideo>,
    /// Record layout of the frame files; canonical when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<FieldMapping>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(DatasetError::MissingManifest(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads every video whose mode is covered by `mode`.
pub fn load_dataset(dir: &Path, mode: TransportMode) -> Result<Dataset, DatasetError> {
    let manifest = read_manifest(dir)?;
    let mapping = manifest.mapping.clone().unwrap_or_default();
    let mut dataset = Dataset::new(mode);
    let mut seen = std::collections::BTreeSet::new();

    for entry in &manifest.videos {
        let video_mode = entry.mode.unwrap_or(manifest.mode);
        if !mode.accepts(video_mode) {
            continue;
        }
        if !seen.insert(entry.id.clone()) {
            return Err(DatasetError::DuplicateVideo(entry.id.clone()));
        }
        let file = dir.join(entry.file.clone().unwrap_or_else(|| format!("{}.jsonl", entry.id)));
        let reader = BufReader::new(fs::File::open(&file).map_err(io_err(&file))?);
        let mut frames = Vec::with_capacity(entry.frames);
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err(&file))?;
            if line.trim().is_empty() {
                continue;
            }
            let frame = parse_frame_record_with(&line, &mapping).map_err(|source| DatasetError::Record {
                video: entry.id.clone(),
                line: n + 1,
                source,
            })?;
            frames.push(frame);
        }
        if frames.len() != entry.frames {
            return Err(DatasetError::InconsistentCount {
                video: entry.id.clone(),
                manifest: entry.frames,
                parsed: frames.len(),
            });
        }
        dataset.sequences.push(VideoSequence {
            video_id: entry.id.clone(),
            frames,
            mode: video_mode,
            frame_period_ms: entry.frame_period_ms,
            camera: entry.camera.clone().unwrap_or_default(),
            location: entry.location.clone().unwrap_or_default(),
        });
    }
    if dataset.sequences.is_empty() {
        return Err(DatasetError::NoVideos(mode.as_str()));
    }
    Ok(dataset)
}

/// Reads a single frame file in canonical layout.
pub fn load_stream(path: &Path) -> Result<Vec<emergency_core::data::PoseFrame>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let video = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            crate::records::parse_frame_record(l).map_err(|source| DatasetError::Record {
                video: video.clone(),
                line: n + 1,
                source,
            })
        })
        .collect()
}

pub fn write_video(path: &Path, video: &VideoSequence) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for frame in &video.frames {
        writeln!(w, "{}", serialize_frame_record(frame)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the canonical layout; returns the manifest written.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        mode: dataset.mode,
        videos: dataset
            .sequences
            .iter()
            .map(|v| ManifestVideo {
                id: v.video_id.clone(),
                frames: v.len(),
                frame_period_ms: v.frame_period_ms,
                mode: (v.mode != dataset.mode).then_some(v.mode),
                camera: (!v.camera.is_empty()).then(|| v.camera.clone()),
                location: (!v.location.is_empty()).then(|| v.location.clone()),
                split: None,
                file: None,
            })
            .collect(),
        mapping: None,
    };
    for v in &dataset.sequences {
        write_video(&dir.join(format!("{}.jsonl", v.video_id)), v)?;
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}
