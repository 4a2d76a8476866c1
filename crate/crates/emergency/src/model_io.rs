//! Versioned JSON model files.

use std::path::Path;

use emergency_core::classifiers::TrainedModel;
use emergency_core::data::TransportMode;
use emergency_core::features::FEATURE_DIM;
use serde::{Deserialize, Serialize};

use crate::artifacts::{check_format, read_json, write_json, ArtifactError, Provenance};

pub const MODEL_FORMAT: &str = "emergency-model";
pub const MODEL_VERSION: u32 = 1;

/// The video-level split a model was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    /// `None` when the split came from the dataset's own flags.
    pub test_fraction: Option<f64>,
    pub seed: u64,
    pub train_videos: Vec<String>,
    pub test_videos: Vec<String>,
    pub train_hash: String,
    pub test_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub mode: TransportMode,
    pub model: TrainedModel,
    pub split: SplitRecord,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn new(mode: TransportMode, model: TrainedModel, split: SplitRecord, provenance: Provenance) -> Self {
        ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, mode, model, split, provenance }
    }
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<(), ArtifactError> {
    write_json(path, file)
}

/// Loads a model file, rejecting other formats and feature layouts.
pub fn load_model(path: &Path) -> Result<ModelFile, ArtifactError> {
    let file: ModelFile = read_json(path)?;
    check_format(path, &file.format, file.version, MODEL_FORMAT, MODEL_VERSION)?;
    if file.model.n_features != FEATURE_DIM {
        return Err(ArtifactError::FeatureMismatch { expected: FEATURE_DIM, found: file.model.n_features });
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use emergency_core::classifiers::{train, ForestParams, HyperparameterSpec};
    use emergency_core::data::ClassLabel;

    fn model() -> TrainedModel {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64; FEATURE_DIM]).collect();
        let y: Vec<ClassLabel> = (0..20).map(|i| if i < 10 { ClassLabel::Normal } else { ClassLabel::Emergency }).collect();
        let spec = HyperparameterSpec::RandomForest(ForestParams {
            n_trees: 3,
            max_depth: Some(2),
            min_samples_leaf: 1,
            max_features_fraction: 0.1,
        });
        train(&spec, &x, &y, 2, 4).unwrap()
    }

    fn file(model: TrainedModel) -> ModelFile {
        let split = SplitRecord {
            test_fraction: Some(0.31),
            seed: 4,
            train_videos: vec!["a".into()],
            test_videos: vec!["b".into()],
            train_hash: "x".into(),
            test_hash: "y".into(),
        };
        ModelFile::new(TransportMode::Walking, model, split, Provenance::new("train", 4, serde_json::json!({})))
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let f = file(model());
        save_model(&path, &f).unwrap();
        assert_eq!(load_model(&path).unwrap(), f);
    }

    #[test]
    fn rejects_wrong_feature_count_and_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut m = model();
        m.n_features = 75;
        save_model(&path, &file(m)).unwrap();
        assert!(matches!(load_model(&path), Err(ArtifactError::FeatureMismatch { expected: 100, found: 75 })));

        let mut f = file(model());
        f.version = 9;
        save_model(&path, &f).unwrap();
        assert!(matches!(load_model(&path), Err(ArtifactError::Format { .. })));
    }
}
