#![no_std]

//! Recall-optimized human emergency detection over per-frame body keypoints.
//!
//! The crate covers the processing chain downstream of pose estimation:
//!
//! - [`data`]: domain types (keypoints, skeletons, frames, videos) and
//!   video-level train/test and k-fold splits.
//! - [`tracking`]: selection of the transported patient among several
//!   detections and depth fusion.
//! - [`features`]: skeleton-normalized 100-dimensional feature vectors.
//! - [`classifiers`]: SVM (SMO), random forest and MLP with per-class decision
//!   scores, plus grouped cross-validated grid search.
//! - [`calibration`]: softmax, Youden's J and emergency threshold moving.
//! - [`stream`]: persistence (delay) filter, delay optimization, event
//!   detection and stability latency.
//! - [`metrics`]: confusion matrices, micro-averaged metrics and evaluation
//!   reports.
//! - [`synth`]: seeded synthetic keypoint streams.
//!
//! Everything here is pure computation on in-memory values; file formats and
//! the command line live in the companion `emergency` crate.

extern crate alloc;

pub mod calibration;
pub mod classifiers;
pub mod data;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod stream;
pub mod synth;
pub mod tracking;

pub use crate::calibration::{Calibration, CalibrationMode, CurvePoint};
pub use crate::classifiers::{HyperparameterSpec, TrainedModel};
pub use crate::data::{
    ClassLabel, Dataset, Keypoint, PoseFrame, Skeleton, TransportMode, VideoSequence,
};
pub use crate::features::{FeatureVector, FEATURE_DIM};
pub use crate::metrics::{ConfusionMatrix, EvaluationReport};
pub use crate::pipeline::Detector;
pub use crate::stream::{DelayFilter, EmergencyEvent};
pub use crate::tracking::{TrackState, TrackerConfig};
