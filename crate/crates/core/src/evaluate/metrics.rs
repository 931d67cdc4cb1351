//! Classification metrics: accuracy, F1 / macro-F1, ROC-AUC, PR-AUC, MCC,
//! and row-normalized confusion matrices.
//!
//! Conventions, applied uniformly: any 0/0 denominator yields 0 (penalizing
//! degenerate predictors instead of crashing); multiclass ROC-AUC and PR-AUC
//! are unweighted macro one-vs-rest averages; multiclass MCC is the
//! covariance-form generalization of the binary formula.

use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::EvalError;

/// The five reported metrics for one prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub accuracy: f64,
    /// Positive-class F1 for binary tasks; unweighted macro-F1 otherwise.
    pub f1: f64,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub mcc: f64,
}

impl MetricValues {
    pub fn as_pairs(&self) -> [(&'static str, f64); 5] {
        [
            ("accuracy", self.accuracy),
            ("f1", self.f1),
            ("roc_auc", self.roc_auc),
            ("pr_auc", self.pr_auc),
            ("mcc", self.mcc),
        ]
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Compute all five metrics. `scores` has one probability column per class;
/// `positive` names the positive class for binary tasks and must be None for
/// multiclass.
pub fn compute_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    scores: &DenseMatrix,
    n_classes: usize,
    positive: Option<usize>,
) -> Result<MetricValues, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.len() != scores.n_rows() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: scores.n_rows(),
        });
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }

    let accuracy = y_true
        .iter()
        .zip(y_pred)
        .filter(|(t, p)| t == p)
        .count() as f64
        / y_true.len() as f64;

    let (f1, roc_auc, pr_auc, mcc) = match positive {
        Some(pos) => {
            let f1 = class_f1(y_true, y_pred, pos);
            let col: Vec<f64> = (0..scores.n_rows()).map(|i| scores.get(i, pos)).collect();
            let truth: Vec<bool> = y_true.iter().map(|&t| t == pos).collect();
            (
                f1,
                binary_roc_auc(&col, &truth),
                average_precision(&col, &truth),
                binary_mcc(y_true, y_pred, pos),
            )
        }
        None => {
            let f1 = macro_f1(y_true, y_pred, n_classes);
            let mut roc_sum = 0.0;
            let mut pr_sum = 0.0;
            for class in 0..n_classes {
                let col: Vec<f64> = (0..scores.n_rows()).map(|i| scores.get(i, class)).collect();
                let truth: Vec<bool> = y_true.iter().map(|&t| t == class).collect();
                roc_sum += binary_roc_auc(&col, &truth);
                pr_sum += average_precision(&col, &truth);
            }
            (
                f1,
                roc_sum / n_classes as f64,
                pr_sum / n_classes as f64,
                multiclass_mcc(y_true, y_pred, n_classes),
            )
        }
    };

    Ok(MetricValues {
        accuracy,
        f1,
        roc_auc,
        pr_auc,
        mcc,
    })
}

/// F1 of one class treated as positive.
pub fn class_f1(y_true: &[usize], y_pred: &[usize], positive: usize) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == positive, p == positive) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    ratio(2.0 * precision * recall, precision + recall)
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> f64 {
    (0..n_classes)
        .map(|c| class_f1(y_true, y_pred, c))
        .sum::<f64>()
        / n_classes as f64
}

/// Binary MCC from the confusion counts.
pub fn binary_mcc(y_true: &[usize], y_pred: &[usize], positive: usize) -> f64 {
    let mut tp = 0.0f64;
    let mut tn = 0.0f64;
    let mut fp = 0.0f64;
    let mut fn_ = 0.0f64;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == positive, p == positive) {
            (true, true) => tp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
        }
    }
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    ratio(tp * tn - fp * fn_, den)
}

/// Covariance-form multiclass MCC:
/// (c*s - sum_k p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2)).
pub fn multiclass_mcc(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> f64 {
    let s = y_true.len() as f64;
    let c = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count() as f64;
    let mut t_k = vec![0.0; n_classes];
    let mut p_k = vec![0.0; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        t_k[t] += 1.0;
        p_k[p] += 1.0;
    }
    let dot: f64 = t_k.iter().zip(&p_k).map(|(a, b)| a * b).sum();
    let t_sq: f64 = t_k.iter().map(|v| v * v).sum();
    let p_sq: f64 = p_k.iter().map(|v| v * v).sum();
    let den = ((s * s - p_sq) * (s * s - t_sq)).sqrt();
    ratio(c * s - dot, den)
}

/// ROC-AUC as the tie-aware rank statistic: the probability a random
/// positive outranks a random negative, with ties counting one half. Equals
/// the Mann-Whitney U statistic normalized by n_pos * n_neg.
pub fn binary_roc_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let n_pos = truth.iter().filter(|t| **t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // Average ranks over tied score groups (1-based ranks).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = ((i + 1) + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if truth[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

/// Average precision: sum over descending-score threshold groups of
/// (recall step) * (precision at the cut).
pub fn average_precision(scores: &[f64], truth: &[bool]) -> f64 {
    let n_pos = truth.iter().filter(|t| **t).count();
    if n_pos == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut tp = 0.0;
    let mut seen = 0.0;
    let mut last_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        // One threshold per distinct score: the whole tie group enters at once.
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if truth[order[j]] {
                tp += 1.0;
            }
            seen += 1.0;
            j += 1;
        }
        let recall = tp / n_pos as f64;
        let precision = tp / seen;
        ap += (recall - last_recall) * precision;
        last_recall = recall;
        i = j;
    }
    ap
}

/// Raw confusion counts, rows = true class, columns = predicted class.
pub fn confusion_counts(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[t][p] += 1;
    }
    counts
}

/// Row-normalized confusion matrix: entry (i, j) is the fraction of
/// true-class-i rows predicted as j. Rows with no samples normalize to zero.
pub fn normalized_confusion(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Vec<Vec<f64>> {
    confusion_counts(y_true, y_pred, n_classes)
        .into_iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.into_iter()
                .map(|c| ratio(c as f64, total as f64))
                .collect()
        })
        .collect()
}

/// Assemble out-of-fold predictions into a normalized confusion matrix.
/// Every row must have been predicted exactly once across folds.
pub fn oof_confusion(
    y_true: &[usize],
    oof_pred: &[Option<usize>],
    n_classes: usize,
) -> Result<Vec<Vec<f64>>, EvalError> {
    if y_true.len() != oof_pred.len() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: oof_pred.len(),
        });
    }
    let mut pred = Vec::with_capacity(oof_pred.len());
    for (row, p) in oof_pred.iter().enumerate() {
        match p {
            Some(v) => pred.push(*v),
            None => return Err(EvalError::UncoveredRow { row }),
        }
    }
    Ok(normalized_confusion(y_true, &pred, n_classes))
}
