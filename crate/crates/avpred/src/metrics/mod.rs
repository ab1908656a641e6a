//! Evaluation metrics: confusion-matrix statistics, threshold-free
//! ranking areas with exact tie handling, macro-averaged multi-class
//! scores, and amino-acid composition statistics.

pub mod compose;
pub mod stats;

use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Count from hard predictions of the positive class.
    pub fn from_predictions(truth: &[bool], predicted: &[bool]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "confusion: {} truths vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut c = ConfusionCounts { tp: 0, tn: 0, fp: 0, fn_: 0 };
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

/// Threshold metrics; undefined ratios surface as NaN with their flag set,
/// and a degenerate MCC denominator yields 0 with `mcc_degenerate`.
#[derive(Debug, Clone, Copy)]
pub struct BinaryMetrics {
    pub acc: f64,
    pub sn: f64,
    pub sp: f64,
    pub mcc: f64,
    pub gmean: f64,
    pub f1: f64,
    pub sn_defined: bool,
    pub sp_defined: bool,
    pub f1_defined: bool,
    pub mcc_degenerate: bool,
}

/// Exact confusion-matrix formulas.
pub fn binary_metrics(c: &ConfusionCounts) -> Result<BinaryMetrics> {
    if c.total() == 0 {
        return Err(Error::Empty("binary metrics on zero counts".into()));
    }
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let acc = (tp + tn) / (tp + tn + fp + fn_);

    let sn_defined = c.tp + c.fn_ > 0;
    let sp_defined = c.tn + c.fp > 0;
    let sn = if sn_defined { tp / (tp + fn_) } else { f64::NAN };
    let sp = if sp_defined { tn / (tn + fp) } else { f64::NAN };

    let denom2 = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc_degenerate = denom2 == 0.0;
    let mcc = if mcc_degenerate { 0.0 } else { (tp * tn - fp * fn_) / denom2.sqrt() };

    let gmean = if sn_defined && sp_defined { (sn * sp).sqrt() } else { f64::NAN };

    let f1_defined = 2 * c.tp + c.fp + c.fn_ > 0;
    let f1 = if f1_defined { 2.0 * tp / (2.0 * tp + fp + fn_) } else { f64::NAN };

    Ok(BinaryMetrics {
        acc,
        sn,
        sp,
        mcc,
        gmean,
        f1,
        sn_defined,
        sp_defined,
        f1_defined,
        mcc_degenerate,
    })
}

/// Scored samples for ranking metrics: (positive-class score, is-positive).
#[derive(Debug, Clone)]
pub struct ScoredPredictions {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Format("scores must be finite".into()));
        }
        Ok(Self { scores, labels })
    }

    fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Sort sample indices by descending score and group ties into
/// (threshold, tp, fp) increments.
fn tie_groups(sp: &ScoredPredictions) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..sp.scores.len()).collect();
    order.sort_by(|&a, &b| sp.scores[b].total_cmp(&sp.scores[a]));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut tp = 0;
        let mut fp = 0;
        let mut j = i;
        while j < order.len() && sp.scores[order[j]] == sp.scores[order[i]] {
            if sp.labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        groups.push((sp.scores[order[i]], tp, fp));
        i = j;
    }
    groups
}

/// Area under the ROC curve: trapezoids over the threshold sweep, with
/// equal scores collapsed into one step. Equivalent to pairwise
/// concordance with half credit for ties.
pub fn auroc(sp: &ScoredPredictions) -> Result<f64> {
    let pos = sp.positives();
    let neg = sp.labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!(
            "AUROC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    let mut tp = 0usize;
    let mut area = 0.0;
    for (_, dtp, dfp) in tie_groups(sp) {
        // Trapezoid across the tie block.
        area += (dfp as f64) * (2.0 * tp as f64 + dtp as f64) / 2.0;
        tp += dtp;
    }
    Ok(area / (pos as f64 * neg as f64))
}

/// Area under the precision-recall curve as step-wise average precision
/// over descending-score tie groups.
pub fn auprc(sp: &ScoredPredictions) -> Result<f64> {
    let pos = sp.positives();
    if pos == 0 {
        return Err(Error::SingleClass("AUPRC needs at least one positive".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (_, dtp, dfp) in tie_groups(sp) {
        tp += dtp;
        fp += dfp;
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Macro-averaged precision/recall/F1.
#[derive(Debug, Clone)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Classes absent from both truth and prediction (scored as 0).
    pub warnings: Vec<usize>,
}

/// Per-class precision and recall averaged over classes; per-class F1
/// averaged for the F score. A class absent from both truth and
/// prediction contributes zeros and a warning entry.
pub fn macro_metrics(
    truth: &[usize],
    predicted: &[usize],
    class_count: usize,
) -> Result<MacroMetrics> {
    if class_count < 2 {
        return Err(Error::Config(format!("class_count must be >= 2, got {class_count}")));
    }
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "macro: {} truths vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("macro metrics on zero samples".into()));
    }
    for &l in truth.iter().chain(predicted) {
        if l >= class_count {
            return Err(Error::Label(format!(
                "label {l} out of range for {class_count} classes"
            )));
        }
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fn_ = vec![0usize; class_count];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut warnings = Vec::new();
    let (mut sum_p, mut sum_r, mut sum_f) = (0.0, 0.0, 0.0);
    for c in 0..class_count {
        if tp[c] + fp[c] + fn_[c] == 0 {
            warnings.push(c);
            continue; // contributes zeros
        }
        let p = if tp[c] + fp[c] > 0 { tp[c] as f64 / (tp[c] + fp[c]) as f64 } else { 0.0 };
        let r = if tp[c] + fn_[c] > 0 { tp[c] as f64 / (tp[c] + fn_[c]) as f64 } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        sum_p += p;
        sum_r += r;
        sum_f += f;
    }
    let k = class_count as f64;
    Ok(MacroMetrics { precision: sum_p / k, recall: sum_r / k, f1: sum_f / k, warnings })
}

/// ROC curve vertices as (fpr, tpr, threshold), tie-grouped, starting at
/// the origin.
pub fn roc_points(sp: &ScoredPredictions) -> Result<Vec<(f64, f64, f64)>> {
    let pos = sp.positives();
    let neg = sp.labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass("ROC curve needs both classes".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = vec![(0.0, 0.0, f64::INFINITY)];
    for (threshold, dtp, dfp) in tie_groups(sp) {
        tp += dtp;
        fp += dfp;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64, threshold));
    }
    Ok(points)
}

/// Precision-recall vertices as (recall, precision, threshold),
/// tie-grouped.
pub fn pr_points(sp: &ScoredPredictions) -> Result<Vec<(f64, f64, f64)>> {
    let pos = sp.positives();
    if pos == 0 {
        return Err(Error::SingleClass("PR curve needs at least one positive".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    for (threshold, dtp, dfp) in tie_groups(sp) {
        tp += dtp;
        fp += dfp;
        points.push((tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64, threshold));
    }
    Ok(points)
}

/// Argmax of a probability row.
pub fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
}

/// Distinct classes present in a label slice.
pub fn present_classes(labels: &[usize]) -> BTreeSet<usize> {
    labels.iter().copied().collect()
}
