//! Trainable classifier families with per-class decision scores.
//!
//! Three families are supported, each tuned over four hyperparameters:
//!
//! | family        | tuned axes                                              |
//! |---------------|---------------------------------------------------------|
//! | SVM           | `c`, `kernel`, `degree`, `gamma`                        |
//! | random forest | `n_trees`, `max_depth`, `min_samples_leaf`, `max_features_fraction` |
//! | MLP           | `hidden_layers`, `learning_rate`, `epochs`, `l2_penalty` |
//!
//! Scores are unbounded for SVM (margins) and MLP (logits) and vote
//! fractions for the forest. Training is a pure function of data, spec and
//! seed.

pub mod forest;
mod grid;
pub mod mlp;
pub mod svm;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassLabel, DataError};
use crate::features::FEATURE_DIM;

pub use grid::{grid_search_cv, GridSearchOutcome, SpecScore};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    Empty,
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("training labels contain a single class")]
    DegenerateData,
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("invalid hyperparameter: {0}")]
    InvalidSpec(&'static str),
    #[error(transparent)]
    Fold(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Svm,
    RandomForest,
    Mlp,
}

impl Family {
    pub fn short_name(self) -> &'static str {
        match self {
            Family::Svm => "SVM",
            Family::RandomForest => "RF",
            Family::Mlp => "MLP",
        }
    }

    pub fn default_grid(self) -> Vec<HyperparameterSpec> {
        match self {
            Family::Svm => default_svm_grid(),
            Family::RandomForest => default_forest_grid(),
            Family::Mlp => default_mlp_grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Polynomial,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    /// `1 / n_features`
    InverseFeatures,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelKind,
    pub degree: u32,
    pub gamma: Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperparameterSpec {
    Svm(SvmParams),
    RandomForest(ForestParams),
    Mlp(MlpParams),
}

impl HyperparameterSpec {
    pub fn family(&self) -> Family {
        match self {
            HyperparameterSpec::Svm(_) => Family::Svm,
            HyperparameterSpec::RandomForest(_) => Family::RandomForest,
            HyperparameterSpec::Mlp(_) => Family::Mlp,
        }
    }

    /// Compact human-readable form, e.g. `SVM(C=0.5, polynomial, degree=2, gamma=1/n)`.
    pub fn describe(&self) -> String {
        match self {
            HyperparameterSpec::Svm(p) => {
                let gamma = match p.gamma {
                    Gamma::InverseFeatures => String::from("1/n"),
                    Gamma::Value(g) => format!("{g}"),
                };
                format!("SVM(C={}, {:?}, degree={}, gamma={})", p.c, p.kernel, p.degree, gamma)
            }
            HyperparameterSpec::RandomForest(p) => format!(
                "RF(trees={}, depth={:?}, leaf={}, features={})",
                p.n_trees, p.max_depth, p.min_samples_leaf, p.max_features_fraction
            ),
            HyperparameterSpec::Mlp(p) => format!(
                "MLP(hidden={:?}, lr={}, epochs={}, l2={})",
                p.hidden_layers, p.learning_rate, p.epochs, p.l2_penalty
            ),
        }
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        let ok = match self {
            HyperparameterSpec::Svm(p) => {
                p.c > 0.0 && p.degree >= 1 && !matches!(p.gamma, Gamma::Value(g) if !(g > 0.0))
            }
            HyperparameterSpec::RandomForest(p) => {
                p.n_trees >= 1 && p.max_features_fraction > 0.0 && p.max_features_fraction <= 1.0
            }
            HyperparameterSpec::Mlp(p) => p.learning_rate > 0.0 && p.l2_penalty >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ClassifierError::InvalidSpec("out-of-range hyperparameter value"))
        }
    }
}

/// The grid contains the polynomial degree-2, `C = 0.5`, `gamma = 1/n` point.
pub fn default_svm_grid() -> Vec<HyperparameterSpec> {
    let mut grid = Vec::new();
    for c in [0.1, 0.5, 1.0, 10.0] {
        for kernel in [KernelKind::Linear, KernelKind::Polynomial, KernelKind::Rbf] {
            for degree in [2, 3] {
                for gamma in [Gamma::InverseFeatures, Gamma::Value(0.01)] {
                    grid.push(HyperparameterSpec::Svm(SvmParams { c, kernel, degree, gamma }));
                }
            }
        }
    }
    grid
}

pub fn default_forest_grid() -> Vec<HyperparameterSpec> {
    let mut grid = Vec::new();
    for n_trees in [50, 100] {
        for max_depth in [Some(8), None] {
            for min_samples_leaf in [1, 5] {
                for max_features_fraction in [0.1, 0.3] {
                    grid.push(HyperparameterSpec::RandomForest(ForestParams {
                        n_trees,
                        max_depth,
                        min_samples_leaf,
                        max_features_fraction,
                    }));
                }
            }
        }
    }
    grid
}

pub fn default_mlp_grid() -> Vec<HyperparameterSpec> {
    let mut grid = Vec::new();
    for hidden_layers in [vec![64], vec![128, 64]] {
        for learning_rate in [0.01, 0.05] {
            for epochs in [50, 100] {
                for l2_penalty in [0.0, 1e-4] {
                    grid.push(HyperparameterSpec::Mlp(MlpParams {
                        hidden_layers: hidden_layers.clone(),
                        learning_rate,
                        epochs,
                        l2_penalty,
                    }));
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedParams {
    Svm(svm::SvmModel),
    RandomForest(forest::ForestModel),
    Mlp(mlp::MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: HyperparameterSpec,
    pub n_classes: usize,
    pub n_features: usize,
    pub train_seed: u64,
    pub params: FittedParams,
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family()
    }

    /// One score per class: SVM margins, forest vote fractions or MLP logits.
    pub fn decision_scores(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if x.len() != self.n_features {
            return Err(ClassifierError::DimensionMismatch { expected: self.n_features, found: x.len() });
        }
        Ok(match &self.params {
            FittedParams::Svm(m) => m.decision_scores(x),
            FittedParams::RandomForest(m) => m.decision_scores(x),
            FittedParams::Mlp(m) => m.decision_scores(x),
        })
    }

    /// Argmax class of the decision scores.
    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel, ClassifierError> {
        let scores = self.decision_scores(x)?;
        Ok(ClassLabel::from_index(crate::calibration::argmax(&scores)).unwrap_or(ClassLabel::Normal))
    }
}

/// Fits one model. `x` rows must all have [`FEATURE_DIM`] values.
pub fn train<R: AsRef<[f64]>>(
    spec: &HyperparameterSpec,
    x: &[R],
    y: &[ClassLabel],
    n_classes: usize,
    seed: u64,
) -> Result<TrainedModel, ClassifierError> {
    spec.validate()?;
    if x.is_empty() {
        return Err(ClassifierError::Empty);
    }
    if x.len() != y.len() {
        return Err(ClassifierError::LengthMismatch { features: x.len(), labels: y.len() });
    }
    let rows: Vec<&[f64]> = x.iter().map(AsRef::as_ref).collect();
    if let Some(bad) = rows.iter().find(|r| r.len() != FEATURE_DIM) {
        return Err(ClassifierError::DimensionMismatch { expected: FEATURE_DIM, found: bad.len() });
    }
    if rows.iter().flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    let labels: Vec<usize> = y.iter().map(|l| l.index()).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ClassifierError::LabelOutOfRange { label: bad, n_classes });
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ClassifierError::DegenerateData);
    }

    let params = match spec {
        HyperparameterSpec::Svm(p) => FittedParams::Svm(svm::fit(p, &rows, &labels, n_classes)),
        HyperparameterSpec::RandomForest(p) => {
            FittedParams::RandomForest(forest::fit(p, &rows, &labels, n_classes, seed))
        }
        HyperparameterSpec::Mlp(p) => FittedParams::Mlp(mlp::fit(p, &rows, &labels, n_classes, seed)),
    };
    Ok(TrainedModel { spec: spec.clone(), n_classes, n_features: FEATURE_DIM, train_seed: seed, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::*;

    fn reference_svm() -> HyperparameterSpec {
        HyperparameterSpec::Svm(SvmParams { c: 0.5, kernel: KernelKind::Polynomial, degree: 2, gamma: Gamma::InverseFeatures })
    }

    fn blobs() -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let jitter = (i % 5) as f64 * 0.05;
            let mut row = vec![0.0; FEATURE_DIM];
            row[0] = if i % 2 == 0 { 2.0 + jitter } else { 0.5 - jitter };
            row[1] = jitter;
            x.push(row);
            y.push(if i % 2 == 0 { Emergency } else { Normal });
        }
        (x, y)
    }

    #[test]
    fn default_svm_grid_contains_reported_configuration() {
        assert_eq!(default_svm_grid().len(), 48);
        assert!(default_svm_grid().contains(&reference_svm()));
        assert_eq!(default_forest_grid().len(), 16);
        assert_eq!(default_mlp_grid().len(), 16);
    }

    #[test]
    fn separable_blobs_are_fit_by_every_family() {
        let (x, y) = blobs();
        let specs = [
            HyperparameterSpec::Svm(SvmParams { c: 1.0, kernel: KernelKind::Linear, degree: 1, gamma: Gamma::InverseFeatures }),
            reference_svm(),
            HyperparameterSpec::RandomForest(ForestParams { n_trees: 15, max_depth: None, min_samples_leaf: 1, max_features_fraction: 0.3 }),
            HyperparameterSpec::Mlp(MlpParams { hidden_layers: vec![8], learning_rate: 0.1, epochs: 60, l2_penalty: 0.0 }),
        ];
        for spec in &specs {
            let model = train(spec, &x, &y, 2, 1).unwrap();
            for (row, label) in x.iter().zip(&y) {
                assert_eq!(model.predict(row).unwrap(), *label, "{}", spec.describe());
            }
        }
    }

    #[test]
    fn two_class_svm_scores_are_antisymmetric() {
        let (x, y) = blobs();
        let model = train(&reference_svm(), &x, &y, 2, 0).unwrap();
        for row in &x {
            let s = model.decision_scores(row).unwrap();
            assert_eq!(s[0], -s[1]);
            assert_eq!(model.predict(row).unwrap() == Emergency, s[1] > 0.0);
        }
        let mut deep = vec![0.0; FEATURE_DIM];
        deep[0] = 3.0;
        assert!(model.decision_scores(&deep).unwrap()[1] > 0.0);
    }

    #[test]
    fn training_errors() {
        let (x, _) = blobs();
        assert_eq!(train(&reference_svm(), &x, &vec![Normal; x.len()], 2, 0).unwrap_err(), ClassifierError::DegenerateData);
        let mut bad = x.clone();
        bad[3][7] = f64::NAN;
        let (_, y) = blobs();
        assert_eq!(train(&reference_svm(), &bad, &y, 2, 0).unwrap_err(), ClassifierError::NonFinite);
        let short = vec![vec![0.0; 99], vec![1.0; 99]];
        assert!(matches!(train(&reference_svm(), &short, &[Normal, Emergency], 2, 0), Err(ClassifierError::DimensionMismatch { .. })));
    }

    #[test]
    fn scoring_rejects_wrong_length() {
        let (x, y) = blobs();
        let model = train(&reference_svm(), &x, &y, 2, 0).unwrap();
        assert_eq!(
            model.decision_scores(&[0.0; 99]),
            Err(ClassifierError::DimensionMismatch { expected: 100, found: 99 })
        );
    }
}
