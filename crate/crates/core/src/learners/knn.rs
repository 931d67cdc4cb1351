//! K-nearest-neighbors on standardized features. No class weighting; the
//! learner is evaluated under the same stratified protocol as the others.

use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::{PredictError, TrainError};

/// Euclidean KNN over a stored training matrix. Scores are neighbor-vote
/// fractions; equal-score classes resolve to the smallest class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    pub train: DenseMatrix,
    pub labels: Vec<usize>,
}

impl KnnModel {
    pub fn fit(
        train: DenseMatrix,
        labels: Vec<usize>,
        n_classes: usize,
        k: usize,
    ) -> Result<Self, TrainError> {
        if train.n_rows() == 0 {
            return Err(TrainError::EmptyMatrix);
        }
        if train.n_rows() != labels.len() {
            return Err(TrainError::InvalidConfig(format!(
                "{} rows but {} labels",
                train.n_rows(),
                labels.len()
            )));
        }
        if k == 0 || k > train.n_rows() {
            return Err(TrainError::InvalidConfig(format!(
                "k must be in 1..={}, got {k}",
                train.n_rows()
            )));
        }
        for &label in &labels {
            if label >= n_classes {
                return Err(TrainError::LabelOutOfRange {
                    label,
                    n_classes,
                });
            }
        }
        Ok(Self {
            k,
            n_classes,
            train,
            labels,
        })
    }
}

/// Vote fractions of the k nearest training rows. Distance ties at the k
/// boundary resolve by training-row index, keeping results deterministic.
pub fn knn_predict(model: &KnnModel, x: &[f64]) -> Result<Vec<f64>, PredictError> {
    if x.len() != model.train.n_cols() {
        return Err(PredictError::DimensionMismatch {
            expected: model.train.n_cols(),
            got: x.len(),
        });
    }
    if model.k > model.train.n_rows() {
        return Err(PredictError::KTooLarge {
            k: model.k,
            n: model.train.n_rows(),
        });
    }
    let mut distances: Vec<(f64, usize)> = (0..model.train.n_rows())
        .map(|i| {
            let row = model.train.row(i);
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    distances.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));

    let mut votes = vec![0.0; model.n_classes];
    for &(_, idx) in distances.iter().take(model.k) {
        votes[model.labels[idx]] += 1.0;
    }
    for v in &mut votes {
        *v /= model.k as f64;
    }
    Ok(votes)
}

/// Predicted class: highest vote fraction, ties to the smallest class index.
pub fn argmax_class(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(k: usize) -> KnnModel {
        let train = DenseMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![5.0, 5.0],
            vec![5.1, 5.0],
        ]);
        KnnModel::fit(train, vec![0, 0, 1, 1], 2, k).unwrap()
    }

    #[test]
    fn majority_of_three() {
        let train = DenseMatrix::from_rows(&[vec![0.0], vec![0.2], vec![0.3], vec![9.0]]);
        let model = KnnModel::fit(train, vec![0, 0, 1, 1], 2, 3).unwrap();
        let scores = knn_predict(&model, &[0.1]).unwrap();
        assert!((scores[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((scores[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(argmax_class(&scores), 0);
    }

    #[test]
    fn k_equals_dataset_size_gives_global_distribution() {
        let model = toy_model(4);
        let scores = knn_predict(&model, &[2.5, 2.5]).unwrap();
        assert_eq!(scores, vec![0.5, 0.5]);
    }

    #[test]
    fn tie_breaks_to_smaller_class_index() {
        let train = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]);
        let model = KnnModel::fit(train, vec![1, 0], 2, 2).unwrap();
        let scores = knn_predict(&model, &[0.5]).unwrap();
        assert_eq!(scores, vec![0.5, 0.5]);
        assert_eq!(argmax_class(&scores), 0);
    }

    #[test]
    fn self_neighbor_with_k1_scores_own_label_one() {
        let model = toy_model(1);
        let scores = knn_predict(&model, &[5.0, 5.0]).unwrap();
        assert_eq!(scores, vec![0.0, 1.0]);
    }

    #[test]
    fn k_zero_or_too_large_rejected() {
        let train = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]);
        assert!(KnnModel::fit(train.clone(), vec![0, 1], 2, 0).is_err());
        assert!(KnnModel::fit(train, vec![0, 1], 2, 3).is_err());
    }
}
