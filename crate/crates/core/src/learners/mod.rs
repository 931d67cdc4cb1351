//! The four classifiers behind one train/predict contract.

pub mod balance;
pub mod forest;
pub mod gbt;
pub mod knn;
pub mod linear;
pub mod tree;

pub use balance::{compute_balanced_weights, compute_scale_pos_weight, ClassBalanceInfo};
pub use forest::{train_random_forest, FeatureSubset, ForestConfig, ForestModel};
pub use gbt::{train_gbt, GbtConfig};
pub use knn::{knn_predict, KnnModel};
pub use linear::{train_logistic, LinearModel, LogisticConfig};
pub use tree::{DecisionTree, Node, Objective, TreeEnsemble};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::PredictError;

/// A trained classifier of any of the four families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Gbt(TreeEnsemble),
    Logistic(LinearModel),
    Forest(ForestModel),
    Knn(KnnModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Gbt(_) => ModelKind::Gbt,
            Model::Logistic(_) => ModelKind::Logistic,
            Model::Forest(_) => ModelKind::Forest,
            Model::Knn(_) => ModelKind::Knn,
        }
    }

    /// Probability matrix, one row per sample, one column per class. Rows
    /// sum to 1 within 1e-9; prediction is deterministic.
    pub fn predict_proba(&self, x: &DenseMatrix) -> Result<DenseMatrix, PredictError> {
        let rows: Result<Vec<Vec<f64>>, PredictError> = (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_proba_row(x.row(i)))
            .collect();
        let rows = rows?;
        Ok(DenseMatrix::from_rows(&rows))
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Result<Vec<f64>, PredictError> {
        match self {
            Model::Gbt(ens) => {
                let expected = ens
                    .trees
                    .iter()
                    .flat_map(|t| t.nodes.iter())
                    .filter_map(|n| match n {
                        Node::Branch { feature, .. } => Some(*feature),
                        Node::Leaf { .. } => None,
                    })
                    .max();
                if let Some(max_feature) = expected {
                    if max_feature >= x.len() {
                        return Err(PredictError::DimensionMismatch {
                            expected: max_feature + 1,
                            got: x.len(),
                        });
                    }
                }
                Ok(ens.predict_proba_row(x))
            }
            Model::Logistic(m) => m.predict_proba_row(x),
            Model::Forest(m) => m.predict_proba_row(x),
            Model::Knn(m) => knn_predict(m, x),
        }
    }

    /// Argmax class per row, ties to the smallest class index.
    pub fn predict_classes(&self, x: &DenseMatrix) -> Result<Vec<usize>, PredictError> {
        let probs = self.predict_proba(x)?;
        Ok((0..probs.n_rows())
            .map(|i| knn::argmax_class(probs.row(i)))
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Self-describing export for downstream tooling: tree models carry
    /// their full node arrays (feature, threshold, children, leaf value,
    /// cover), the linear model its weights, and KNN a digest reference to
    /// the training artifact rather than a copy of the data.
    pub fn export_json(&self) -> String {
        let value = match self {
            Model::Knn(m) => {
                let bytes: Vec<u8> = m
                    .train
                    .data()
                    .iter()
                    .flat_map(|v| v.to_le_bytes())
                    .collect();
                serde_json::json!({
                    "model": "knn",
                    "k": m.k,
                    "n_classes": m.n_classes,
                    "distance": "euclidean",
                    "training_ref": {
                        "n_rows": m.train.n_rows(),
                        "n_cols": m.train.n_cols(),
                        "sha256": crate::util::sha256_hex(&bytes),
                    },
                })
            }
            other => serde_json::to_value(other).expect("model serializes"),
        };
        serde_json::to_string_pretty(&value).expect("model serializes")
    }
}

/// Model family identifier, used by grids and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbt,
    Logistic,
    Forest,
    Knn,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::Logistic => "logistic",
            ModelKind::Forest => "forest",
            ModelKind::Knn => "knn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gbt" => Some(ModelKind::Gbt),
            "logistic" => Some(ModelKind::Logistic),
            "forest" => Some(ModelKind::Forest),
            "knn" => Some(ModelKind::Knn),
            _ => None,
        }
    }

    pub fn all() -> [ModelKind; 4] {
        [
            ModelKind::Gbt,
            ModelKind::Logistic,
            ModelKind::Forest,
            ModelKind::Knn,
        ]
    }
}
