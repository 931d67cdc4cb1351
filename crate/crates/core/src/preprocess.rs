//! Z-score standardization fitted on training data only; held-out partitions
//! are transformed with the training parameters to prevent leakage.

use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::IngestError;

/// Per-feature mean and population standard deviation learned from one
/// training partition. Zero-variance features are recorded with sigma = 0
/// and transform to 0, keeping the column contract stable across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub fitted_on: String,
}

impl Standardizer {
    /// Fit on a training matrix. Population (1/N) standard deviation, so the
    /// training set itself transforms to exactly zero mean and unit variance.
    pub fn fit(
        train: &DenseMatrix,
        feature_names: &[String],
        fitted_on: &str,
    ) -> Result<Self, IngestError> {
        if train.n_rows() == 0 {
            return Err(IngestError::EmptyMatrix);
        }
        if feature_names.len() != train.n_cols() {
            return Err(IngestError::FeatureOrderMismatch {
                expected: train.n_cols(),
                got: feature_names.len(),
            });
        }
        let n = train.n_rows() as f64;
        let d = train.n_cols();
        let mut means = vec![0.0; d];
        for i in 0..train.n_rows() {
            let row = train.row(i);
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; d];
        for i in 0..train.n_rows() {
            let row = train.row(i);
            for j in 0..d {
                let diff = row[j] - means[j];
                vars[j] += diff * diff;
            }
        }
        let sds = vars.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Self {
            feature_names: feature_names.to_vec(),
            means,
            sds,
            fitted_on: fitted_on.to_string(),
        })
    }

    /// Apply the fitted transform: (x - mean) / sd, with sd = 0 columns
    /// mapping to 0.
    pub fn transform(&self, data: &DenseMatrix) -> Result<DenseMatrix, IngestError> {
        if data.n_cols() != self.means.len() {
            return Err(IngestError::FeatureOrderMismatch {
                expected: self.means.len(),
                got: data.n_cols(),
            });
        }
        let mut out = data.clone();
        for i in 0..out.n_rows() {
            let row = out.row_mut(i);
            for j in 0..row.len() {
                row[j] = if self.sds[j] > 0.0 {
                    (row[j] - self.means[j]) / self.sds[j]
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }

    /// JSON sidecar (feature name -> mean, sd) for audit.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("standardizer serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
