//! File formats and the command-line workflow around `emergency-core`.
//!
//! - [`records`]: one-frame-per-line JSON records and a field-mapping adapter.
//! - [`dataset_io`]: dataset directories (manifest plus frame files).
//! - [`depth_io`]: binary depth grids.
//! - [`model_io`]: versioned model files.
//! - [`artifacts`]: calibration, delay and report files, curves, logs, hashes.
//! - [`harness`]: the `synth`, `train`, `calibrate`, `tune-delay`,
//!   `evaluate` and `replay` commands.

pub mod artifacts;
pub mod dataset_io;
pub mod depth_io;
pub mod harness;
pub mod model_io;
pub mod records;

pub use emergency_core as core;
