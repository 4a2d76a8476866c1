//! Decision-threshold moving.
//!
//! Scores are mapped to probabilities with [`softmax`]. Binary (walking)
//! models get the threshold maximizing Youden's J; multiclass models get the
//! emergency threshold that maximizes the Emergency F1 on a fixed grid
//! `{0, 0.001, ..., 0.499}`. At equal objective the smaller threshold wins.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ClassLabel;
use crate::metrics::{f1_fraction, fraction_gt, prf_from_counts, Ratio};

/// Number of points on the multiclass threshold grid.
pub const THRESHOLD_GRID_LEN: usize = 500;
pub const THRESHOLD_GRID_STEP: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalibrationError {
    #[error("scores contain a non-finite value")]
    NonFinite,
    #[error("only one class present in the labels")]
    SingleClass,
    #[error("no Emergency samples to calibrate on")]
    NoEmergencySamples,
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("probability outside [0, 1]")]
    InvalidProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    Binary,
    Multiclass,
}

/// One evaluated threshold. `tpr`, `fpr` and `precision` are the
/// one-vs-rest Emergency rates at that threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub objective: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mode: CalibrationMode,
    /// `None` means plain argmax.
    pub threshold: Option<f64>,
    pub curve: Vec<CurvePoint>,
}

impl Calibration {
    pub fn argmax(mode: CalibrationMode) -> Self {
        Calibration { mode, threshold: None, curve: Vec::new() }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>, CalibrationError> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CalibrationError::NonFinite);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the largest value; lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Applies a calibrated decision rule to one probability vector.
///
/// Binary: Emergency iff `p(Emergency) >= t`. Multiclass: Emergency if
/// `p(Emergency) >= t`, otherwise argmax. Without a threshold: argmax.
pub fn classify_with_threshold(probs: &[f64], calibration: Option<&Calibration>) -> ClassLabel {
    let by_argmax = || ClassLabel::from_index(argmax(probs)).unwrap_or(ClassLabel::Normal);
    let p_emergency = probs.get(ClassLabel::Emergency.index()).copied().unwrap_or(0.0);
    match calibration.and_then(|c| c.threshold.map(|t| (c.mode, t))) {
        None => by_argmax(),
        Some((CalibrationMode::Binary, t)) => {
            if p_emergency >= t {
                ClassLabel::Emergency
            } else {
                ClassLabel::Normal
            }
        }
        Some((CalibrationMode::Multiclass, t)) => {
            if p_emergency >= t {
                ClassLabel::Emergency
            } else {
                by_argmax()
            }
        }
    }
}

fn youden_j(tp: usize, positives: usize, tn: usize, negatives: usize) -> f64 {
    let sensitivity = tp as f64 / positives as f64;
    let specificity = tn as f64 / negatives as f64;
    sensitivity + specificity - 1.0
}

/// Candidate thresholds: 0, midpoints of adjacent distinct sorted
/// probabilities, 1.
pub fn youden_candidates(sorted_distinct: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sorted_distinct.len() + 1);
    out.push(0.0);
    out.extend(sorted_distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    out.push(1.0);
    out
}

/// Binary threshold maximizing `J = sensitivity + specificity - 1`, where a
/// sample is predicted Emergency iff its probability is `>= t`.
pub fn youden_threshold(probs: &[f64], labels: &[bool]) -> Result<Calibration, CalibrationError> {
    if probs.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(CalibrationError::NonFinite);
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CalibrationError::InvalidProbability);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CalibrationError::SingleClass);
    }

    let mut order: Vec<(f64, bool)> = probs.iter().copied().zip(labels.iter().copied()).collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct: Vec<f64> = order.iter().map(|o| o.0).collect();
    distinct.dedup();
    let candidates = youden_candidates(&distinct);

    // sweep: samples below the threshold are predicted negative
    let (mut below, mut fn_, mut tn) = (0usize, 0usize, 0usize);
    let mut curve = Vec::with_capacity(candidates.len());
    // J compared exactly via its numerator over positives * negatives
    let mut best: Option<(f64, u128)> = None;
    for &t in &candidates {
        while below < order.len() && order[below].0 < t {
            if order[below].1 {
                fn_ += 1;
            } else {
                tn += 1;
            }
            below += 1;
        }
        let tp = positives - fn_;
        let fp = negatives - tn;
        let j = youden_j(tp, positives, tn, negatives);
        let key = tp as u128 * negatives as u128 + tn as u128 * positives as u128;
        if best.is_none_or(|(_, bk)| key > bk) {
            best = Some((t, key));
        }
        curve.push(CurvePoint {
            threshold: t,
            objective: j,
            tpr: tp as f64 / positives as f64,
            fpr: fp as f64 / negatives as f64,
            precision: Ratio::of(tp as u64, (tp + fp) as u64).value,
        });
    }
    Ok(Calibration { mode: CalibrationMode::Binary, threshold: best.map(|b| b.0), curve })
}

pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (0..THRESHOLD_GRID_LEN).map(|i| i as f64 * THRESHOLD_GRID_STEP)
}

/// Multiclass emergency threshold: grid scan maximizing the Emergency F1.
pub fn emergency_threshold(scores: &[Vec<f64>], labels: &[ClassLabel]) -> Result<Calibration, CalibrationError> {
    if scores.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch(scores.len(), labels.len()));
    }
    if !labels.iter().any(|l| l.is_emergency()) {
        return Err(CalibrationError::NoEmergencySamples);
    }
    let probs = scores.iter().map(|s| softmax(s)).collect::<Result<Vec<_>, _>>()?;
    // per sample: (p_emergency, argmax is Emergency, truth is Emergency)
    let samples: Vec<(f64, bool, bool)> = probs
        .iter()
        .zip(labels)
        .map(|(p, l)| {
            let pe = p.get(ClassLabel::Emergency.index()).copied().unwrap_or(0.0);
            (pe, argmax(p) == ClassLabel::Emergency.index(), l.is_emergency())
        })
        .collect();
    let positives = samples.iter().filter(|s| s.2).count() as u64;
    let negatives = samples.len() as u64 - positives;

    let mut curve = Vec::with_capacity(THRESHOLD_GRID_LEN);
    let mut best: Option<(f64, (u128, u128))> = None;
    for t in threshold_grid() {
        let (mut tp, mut fp) = (0u64, 0u64);
        for &(pe, argmax_emergency, truth) in &samples {
            if pe >= t || argmax_emergency {
                if truth {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let (precision, recall, f1) = prf_from_counts(tp, fp, positives - tp);
        let exact = f1_fraction(tp, fp, positives - tp);
        if best.is_none_or(|(_, bf)| fraction_gt(exact, bf)) {
            best = Some((t, exact));
        }
        curve.push(CurvePoint {
            threshold: t,
            objective: f1.value,
            tpr: recall.value,
            fpr: Ratio::of(fp, negatives).value,
            precision: precision.value,
        });
    }
    Ok(Calibration { mode: CalibrationMode::Multiclass, threshold: best.map(|b| b.0), curve })
}
