//! Confusion matrices, recall/precision/F1 and evaluation reports.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassLabel, TransportMode};
use crate::stream::LatencyStats;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ ({predictions} vs {truths})")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("binary recall needs a 2-class matrix with at least one positive")]
    NoPositives,
    #[error("label subset is empty")]
    EmptySubset,
}

/// Counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        ConfusionMatrix { n_classes, counts: alloc::vec![alloc::vec![0; n_classes]; n_classes] }
    }

    pub fn get(&self, truth: usize, prediction: usize) -> u64 {
        self.counts[truth][prediction]
    }

    pub fn add(&mut self, truth: usize, prediction: usize) {
        self.counts[truth][prediction] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn column_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// One-vs-rest `(tp, fp, fn)` of `class`.
    pub fn one_vs_rest(&self, class: usize) -> (u64, u64, u64) {
        let tp = self.counts[class][class];
        (tp, self.column_sum(class) - tp, self.row_sum(class) - tp)
    }

    pub fn accuracy(&self) -> Ratio {
        let diag: u64 = (0..self.n_classes).map(|c| self.counts[c][c]).sum();
        Ratio::of(diag, self.total())
    }
}

pub fn confusion(
    predictions: &[ClassLabel],
    truths: &[ClassLabel],
    n_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&p, &t) in predictions.iter().zip(truths) {
        for label in [p, t] {
            if label.index() >= n_classes {
                return Err(MetricsError::LabelOutOfRange { label: label.index(), n_classes });
            }
        }
        cm.add(t.index(), p.index());
    }
    Ok(cm)
}

/// A metric value whose denominator may be zero. Undefined values read as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub undefined: bool,
}

impl Ratio {
    pub const UNDEFINED: Ratio = Ratio { value: 0.0, undefined: true };

    pub fn defined(value: f64) -> Self {
        Ratio { value, undefined: false }
    }

    pub fn of(numerator: u64, denominator: u64) -> Self {
        if denominator == 0 {
            Ratio::UNDEFINED
        } else {
            Ratio::defined(numerator as f64 / denominator as f64)
        }
    }
}

/// Harmonic mean of precision and recall. 0 when both are 0; undefined when
/// either input is.
pub fn f1_score(precision: Ratio, recall: Ratio) -> Ratio {
    if precision.undefined || recall.undefined {
        return Ratio::UNDEFINED;
    }
    let (p, r) = (precision.value, recall.value);
    if p + r == 0.0 {
        return Ratio::defined(0.0);
    }
    Ratio::defined(2.0 * p * r / (p + r))
}

/// Precision, recall and F1 straight from pooled counts.
pub fn prf_from_counts(tp: u64, fp: u64, fn_: u64) -> (Ratio, Ratio, Ratio) {
    let precision = Ratio::of(tp, tp + fp);
    let recall = Ratio::of(tp, tp + fn_);
    (precision, recall, f1_score(precision, recall))
}

/// F1 as the exact fraction `2tp / (2tp + fp + fn)`, `0/1` when empty.
pub(crate) fn f1_fraction(tp: u64, fp: u64, fn_: u64) -> (u128, u128) {
    let den = 2 * tp as u128 + fp as u128 + fn_ as u128;
    if den == 0 {
        (0, 1)
    } else {
        (2 * tp as u128, den)
    }
}

/// `a > b` for non-negative fractions `(numerator, denominator)`.
pub(crate) fn fraction_gt(a: (u128, u128), b: (u128, u128)) -> bool {
    a.0 * b.1 > b.0 * a.1
}

/// TP / (TP + FN) of class 1 in a 2-class matrix.
pub fn recall_binary(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    if cm.n_classes != 2 {
        return Err(MetricsError::NoPositives);
    }
    let (tp, _, fn_) = cm.one_vs_rest(1);
    if tp + fn_ == 0 {
        return Err(MetricsError::NoPositives);
    }
    Ok(tp as f64 / (tp + fn_) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroMetrics {
    pub recall: Ratio,
    pub precision: Ratio,
    pub f1: Ratio,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Micro-averaged metrics: one-vs-rest counts summed over `subset`.
pub fn micro_metrics(cm: &ConfusionMatrix, subset: &[ClassLabel]) -> Result<MicroMetrics, MetricsError> {
    if subset.is_empty() {
        return Err(MetricsError::EmptySubset);
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for label in subset {
        let c = label.index();
        if c >= cm.n_classes {
            return Err(MetricsError::LabelOutOfRange { label: c, n_classes: cm.n_classes });
        }
        let (t, p, n) = cm.one_vs_rest(c);
        tp += t;
        fp += p;
        fn_ += n;
    }
    let (precision, recall, f1) = prf_from_counts(tp, fp, fn_);
    Ok(MicroMetrics { recall, precision, f1, tp, fp, fn_ })
}

pub fn all_labels(n_classes: usize) -> Vec<ClassLabel> {
    ClassLabel::ALL[..n_classes].to_vec()
}

/// One row of the results table: pre-delay recall/F1, calibrated threshold,
/// delay, and how the delay changed the false positive/negative counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_name: String,
    pub mode: TransportMode,
    /// Emergency-restricted micro recall, before the delay filter.
    pub recall: Ratio,
    /// Emergency-restricted micro F1, before the delay filter.
    pub f1: Ratio,
    pub precision: Ratio,
    /// Micro recall over all classes.
    pub recall_all_classes: Ratio,
    pub f1_all_classes: Ratio,
    pub threshold: Option<f64>,
    pub delay_ms: u32,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp_delayed: u64,
    pub fn_delayed: u64,
    pub fp_ratio: Ratio,
    pub fn_ratio: Ratio,
    pub recall_delayed: Ratio,
    pub f1_delayed: Ratio,
    pub confusion: ConfusionMatrix,
    pub confusion_delayed: ConfusionMatrix,
    pub latency: LatencyStats,
    pub events: usize,
    pub n_videos: usize,
    pub n_frames: usize,
}

fn fmt_ratio(r: Ratio) -> String {
    if r.undefined {
        String::from("n/a")
    } else {
        alloc::format!("{:.3}", r.value)
    }
}

/// Plain-text table with the report columns, one row per report.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<24} {:>7} {:>8} {:>7} {:>7} {:>9} {:>9}",
        "Application", "Model name", "Recall", "F1", "t", "d [ms]", "FPd/FP", "FNd/FN"
    );
    for r in reports {
        let threshold = r.threshold.map_or_else(|| String::from("-"), |t| alloc::format!("{t:.3}"));
        let _ = writeln!(
            out,
            "{:<12} {:<24} {:>7} {:>8} {:>7} {:>7} {:>9} {:>9}",
            r.mode.as_str(),
            r.model_name,
            fmt_ratio(r.recall),
            fmt_ratio(r.f1),
            threshold,
            r.delay_ms,
            fmt_ratio(r.fp_ratio),
            fmt_ratio(r.fn_ratio),
        );
    }
    out
}
