use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{train, ClassifierError, HyperparameterSpec};
use crate::data::{kfold_videos, ClassLabel, Dataset};
use crate::metrics::{confusion, micro_metrics};
use crate::pipeline::{dataset_samples, pooled};
use crate::tracking::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecScore {
    pub spec: HyperparameterSpec,
    /// Emergency recall per fold; `None` where the validation fold holds no
    /// Emergency frames.
    pub fold_recalls: Vec<Option<f64>>,
    /// Mean over the folds with a defined recall (0 if none).
    pub mean_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchOutcome {
    pub best_index: usize,
    pub best: HyperparameterSpec,
    pub scores: Vec<SpecScore>,
}

/// Grouped k-fold grid search maximizing Emergency-restricted micro recall
/// of argmax predictions. Ties keep the earliest grid entry.
pub fn grid_search_cv(
    grid: &[HyperparameterSpec],
    train_set: &Dataset,
    k: usize,
    seed: u64,
    tracker: &TrackerConfig,
) -> Result<GridSearchOutcome, ClassifierError> {
    if grid.is_empty() {
        return Err(ClassifierError::EmptyGrid);
    }
    let folds = kfold_videos(train_set, k, seed)?;
    let samples = dataset_samples(train_set, tracker);
    let n_classes = train_set.mode.n_classes();

    let mut scores = Vec::with_capacity(grid.len());
    for spec in grid {
        let mut fold_recalls = Vec::with_capacity(folds.len());
        for fold in &folds {
            let (x, y) = pooled(&samples, &fold.train);
            let model = train(spec, &x, &y, n_classes, seed)?;
            let (vx, vy) = pooled(&samples, &fold.validation);
            let predicted = vx.iter().map(|row| model.predict(row)).collect::<Result<Vec<_>, _>>()?;
            let recall = confusion(&predicted, &vy, n_classes)
                .and_then(|cm| micro_metrics(&cm, &[ClassLabel::Emergency]))
                .ok()
                .and_then(|m| (!m.recall.undefined).then_some(m.recall.value));
            fold_recalls.push(recall);
        }
        let defined: Vec<f64> = fold_recalls.iter().flatten().copied().collect();
        let mean_recall = if defined.is_empty() { 0.0 } else { defined.iter().sum::<f64>() / defined.len() as f64 };
        scores.push(SpecScore { spec: spec.clone(), fold_recalls, mean_recall });
    }

    let best_index = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if s.mean_recall > scores[best].mean_recall { i } else { best });
    Ok(GridSearchOutcome { best_index, best: grid[best_index].clone(), scores })
}
