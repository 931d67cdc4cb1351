//! Class-imbalance bookkeeping: the majority/minority weight ratio applied
//! to boosted trees and the inverse-frequency balanced weights applied to
//! the other weight-aware learners.

use serde::{Deserialize, Serialize};

use crate::error::TrainError;

/// Counts and weights derived from one task's label vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBalanceInfo {
    pub n_major: usize,
    pub n_minor: usize,
    /// n_major / n_minor, exactly.
    pub scale_pos_weight: f64,
    /// Balanced weight per class: N / (K * n_c).
    pub per_class_weight: Vec<f64>,
}

impl ClassBalanceInfo {
    pub fn n_classes(&self) -> usize {
        self.per_class_weight.len()
    }

    /// Neutral weighting (all ones) for learners run without balancing.
    pub fn unweighted(n_classes: usize) -> Self {
        Self {
            n_major: 0,
            n_minor: 0,
            scale_pos_weight: 1.0,
            per_class_weight: vec![1.0; n_classes],
        }
    }
}

fn class_counts(labels: &[usize], n_classes: usize) -> Result<Vec<usize>, TrainError> {
    let mut counts = vec![0usize; n_classes];
    for &label in labels {
        if label >= n_classes {
            return Err(TrainError::LabelOutOfRange {
                label,
                n_classes,
            });
        }
        counts[label] += 1;
    }
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(TrainError::MissingClass { class });
        }
    }
    Ok(counts)
}

/// Majority-to-minority count ratio for a binary label vector. Errors when a
/// class is absent.
pub fn compute_scale_pos_weight(labels: &[usize]) -> Result<f64, TrainError> {
    if labels.is_empty() {
        return Err(TrainError::EmptyMatrix);
    }
    let counts = class_counts(labels, 2).map_err(|e| match e {
        TrainError::MissingClass { .. } => TrainError::SingleClass,
        other => other,
    })?;
    let major = counts[0].max(counts[1]);
    let minor = counts[0].min(counts[1]);
    Ok(major as f64 / minor as f64)
}

/// Full balance info: counts, the majority/minority ratio, and per-class
/// balanced weights N / (K * n_c). The weights satisfy
/// sum_c n_c * weight_c = N.
pub fn compute_balanced_weights(
    labels: &[usize],
    n_classes: usize,
) -> Result<ClassBalanceInfo, TrainError> {
    if labels.is_empty() {
        return Err(TrainError::EmptyMatrix);
    }
    if n_classes < 2 {
        return Err(TrainError::SingleClass);
    }
    let counts = class_counts(labels, n_classes)?;
    let n = labels.len() as f64;
    let k = n_classes as f64;
    let per_class_weight = counts.iter().map(|&c| n / (k * c as f64)).collect();
    let n_major = *counts.iter().max().expect("non-empty");
    let n_minor = *counts.iter().min().expect("non-empty");
    Ok(ClassBalanceInfo {
        n_major,
        n_minor,
        scale_pos_weight: n_major as f64 / n_minor as f64,
        per_class_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_labels_give_unit_ratio() {
        let labels: Vec<usize> = [vec![1usize; 10], vec![0usize; 10]].concat();
        assert_eq!(compute_scale_pos_weight(&labels).unwrap(), 1.0);
    }

    #[test]
    fn exact_division() {
        let labels: Vec<usize> = [vec![0usize; 100], vec![1usize; 4]].concat();
        assert_eq!(compute_scale_pos_weight(&labels).unwrap(), 25.0);
    }

    #[test]
    fn cohort_scale_ratio() {
        // Healthy 7,689 vs ModSevere 553 from the study accounting.
        let labels: Vec<usize> = [vec![0usize; 7689], vec![1usize; 553]].concat();
        let spw = compute_scale_pos_weight(&labels).unwrap();
        let oracle = 7689.0 / 553.0;
        assert!((spw - oracle).abs() < 1e-12);
        assert!((spw - 13.9042).abs() < 1e-4);
    }

    #[test]
    fn single_class_errors() {
        let labels = vec![1usize; 5];
        assert!(matches!(
            compute_scale_pos_weight(&labels).unwrap_err(),
            TrainError::SingleClass
        ));
    }

    #[test]
    fn balanced_weights_equal_classes() {
        let labels: Vec<usize> = [vec![0usize; 5], vec![1usize; 5]].concat();
        let info = compute_balanced_weights(&labels, 2).unwrap();
        assert_eq!(info.per_class_weight, vec![1.0, 1.0]);
        assert_eq!(info.scale_pos_weight, 1.0);
    }

    #[test]
    fn nine_to_one_formula_arithmetic() {
        let labels: Vec<usize> = [vec![0usize; 9], vec![1usize; 1]].concat();
        let info = compute_balanced_weights(&labels, 2).unwrap();
        assert!((info.per_class_weight[0] - 10.0 / 18.0).abs() < 1e-12);
        assert!((info.per_class_weight[0] - 0.5556).abs() < 1e-4);
        assert!((info.per_class_weight[1] - 5.0).abs() < 1e-12);
        // Invariant: weighted total mass equals N.
        let mass = 9.0 * info.per_class_weight[0] + 1.0 * info.per_class_weight[1];
        assert!((mass - 10.0).abs() < 1e-12);
    }

    #[test]
    fn three_symmetric_classes_unit_weights() {
        let labels: Vec<usize> = [vec![0usize; 4], vec![1usize; 4], vec![2usize; 4]].concat();
        let info = compute_balanced_weights(&labels, 3).unwrap();
        for w in &info.per_class_weight {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_class_errors() {
        let labels = vec![0usize, 0, 2, 2];
        assert!(matches!(
            compute_balanced_weights(&labels, 3).unwrap_err(),
            TrainError::MissingClass { class: 1 }
        ));
    }
}
