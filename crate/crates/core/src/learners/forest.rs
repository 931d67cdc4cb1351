//! Class-weighted random forest: bootstrap-sampled trees with weighted Gini
//! splits, feature subsampling at each node, and mean-probability voting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::{PredictError, TrainError};
use crate::learners::balance::ClassBalanceInfo;

/// Number of candidate features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    /// floor(sqrt(d)), the usual classification default.
    Sqrt,
    All,
    Fixed(usize),
}

impl FeatureSubset {
    fn resolve(self, d: usize) -> usize {
        match self {
            FeatureSubset::Sqrt => ((d as f64).sqrt().floor() as usize).clamp(1, d),
            FeatureSubset::All => d,
            FeatureSubset::Fixed(m) => m.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: FeatureSubset,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 16,
            min_leaf: 1,
            features_per_split: FeatureSubset::Sqrt,
            seed: 0,
        }
    }
}

/// Classification tree node; leaves carry a class-probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassNode {
    Branch {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        probs: Vec<f64>,
        cover: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTree {
    pub nodes: Vec<ClassNode>,
}

impl ClassTree {
    pub fn evaluate<'a>(&'a self, x: &[f64]) -> &'a [f64] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                ClassNode::Leaf { probs, .. } => return probs,
                ClassNode::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => idx = if x[*feature] < *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<ClassTree>,
}

impl ForestModel {
    /// Mean of per-tree leaf distributions.
    pub fn predict_proba_row(&self, x: &[f64]) -> Result<Vec<f64>, PredictError> {
        if x.len() != self.n_features {
            return Err(PredictError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (o, p) in out.iter_mut().zip(tree.evaluate(x)) {
                *o += p;
            }
        }
        for o in &mut out {
            *o /= self.trees.len() as f64;
        }
        Ok(out)
    }
}

/// Train a forest. Bootstrap is with replacement at the full sample count;
/// per-tree RNG streams derive from (seed, tree index) so parallel training
/// stays bit-deterministic.
pub fn train_random_forest(
    x: &DenseMatrix,
    y: &[usize],
    balance: &ClassBalanceInfo,
    config: &ForestConfig,
) -> Result<ForestModel, TrainError> {
    if config.n_trees == 0 {
        return Err(TrainError::InvalidConfig("n_trees must be >= 1".into()));
    }
    if config.max_depth == 0 {
        return Err(TrainError::InvalidConfig("max_depth must be >= 1".into()));
    }
    if config.min_leaf == 0 {
        return Err(TrainError::InvalidConfig("min_leaf must be >= 1".into()));
    }
    if x.n_rows() == 0 {
        return Err(TrainError::EmptyMatrix);
    }
    if x.n_rows() != y.len() {
        return Err(TrainError::InvalidConfig(format!(
            "{} rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    let n_classes = balance.n_classes();
    for &label in y {
        if label >= n_classes {
            return Err(TrainError::LabelOutOfRange { label, n_classes });
        }
    }

    let trees: Vec<ClassTree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(crate::util::derive_seed(config.seed, &format!("tree{t}")));
            let indices: Vec<usize> = (0..x.n_rows())
                .map(|_| rng.gen_range(0..x.n_rows()))
                .collect();
            build_tree(x, y, balance, config, &indices, &mut rng)
        })
        .collect();

    Ok(ForestModel {
        n_classes,
        n_features: x.n_cols(),
        trees,
    })
}

/// Grow one Gini tree on the given (possibly repeated) row indices. Exposed
/// to tests so split behavior can be checked without bootstrap noise.
pub fn build_tree(
    x: &DenseMatrix,
    y: &[usize],
    balance: &ClassBalanceInfo,
    config: &ForestConfig,
    indices: &[usize],
    rng: &mut ChaCha8Rng,
) -> ClassTree {
    let mut nodes = Vec::new();
    grow(x, y, balance, config, indices, 0, rng, &mut nodes);
    ClassTree { nodes }
}

/// Weighted Gini impurity of a class-weight histogram: 1 - sum (w_c/W)^2.
fn gini(class_weights: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - class_weights
        .iter()
        .map(|w| (w / total) * (w / total))
        .sum::<f64>()
}

#[allow(clippy::too_many_arguments)]
fn grow(
    x: &DenseMatrix,
    y: &[usize],
    balance: &ClassBalanceInfo,
    config: &ForestConfig,
    indices: &[usize],
    depth: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<ClassNode>,
) -> usize {
    let n_classes = balance.n_classes();
    let mut class_w = vec![0.0; n_classes];
    for &i in indices {
        class_w[y[i]] += balance.per_class_weight[y[i]];
    }
    let total_w: f64 = class_w.iter().sum();
    let pure = class_w.iter().filter(|w| **w > 0.0).count() <= 1;

    let make_leaf = |nodes: &mut Vec<ClassNode>, class_w: &[f64]| -> usize {
        let probs = class_w.iter().map(|w| w / total_w).collect();
        let slot = nodes.len();
        nodes.push(ClassNode::Leaf {
            probs,
            cover: total_w,
        });
        slot
    };

    // Purity stops growth regardless of remaining depth budget.
    if pure || depth >= config.max_depth || indices.len() < 2 * config.min_leaf {
        return make_leaf(nodes, &class_w);
    }

    // Feature subsample for this node.
    let m = config.features_per_split.resolve(x.n_cols());
    let mut features: Vec<usize> = (0..x.n_cols()).collect();
    features.shuffle(rng);
    features.truncate(m);
    features.sort_unstable();

    let parent_impurity = gini(&class_w, total_w) * total_w;
    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)

    let mut sorted: Vec<usize> = indices.to_vec();
    for &feature in &features {
        sorted.sort_by(|&a, &b| {
            x.get(a, feature)
                .partial_cmp(&x.get(b, feature))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut left_w = vec![0.0; n_classes];
        let mut left_total = 0.0;
        for (pos, &i) in sorted.iter().enumerate().take(sorted.len() - 1) {
            left_w[y[i]] += balance.per_class_weight[y[i]];
            left_total += balance.per_class_weight[y[i]];
            let value = x.get(i, feature);
            let next = x.get(sorted[pos + 1], feature);
            if next <= value {
                continue;
            }
            let left_count = pos + 1;
            let right_count = sorted.len() - left_count;
            if left_count < config.min_leaf || right_count < config.min_leaf {
                continue;
            }
            let right_w: Vec<f64> = class_w
                .iter()
                .zip(&left_w)
                .map(|(t, l)| t - l)
                .collect();
            let right_total = total_w - left_total;
            let child_impurity =
                gini(&left_w, left_total) * left_total + gini(&right_w, right_total) * right_total;
            let gain = parent_impurity - child_impurity;
            let threshold = 0.5 * (value + next);
            let better = match best {
                None => gain > 1e-12,
                Some((bg, bf, bt)) => {
                    gain > bg + 1e-12
                        || ((gain - bg).abs() <= 1e-12
                            && (feature < bf || (feature == bf && threshold < bt)))
                }
            };
            if better && gain > 1e-12 {
                best = Some((gain, feature, threshold));
            }
        }
    }

    match best {
        None => make_leaf(nodes, &class_w),
        Some((_, feature, threshold)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| x.get(i, feature) < threshold);
            let slot = nodes.len();
            nodes.push(ClassNode::Branch {
                feature,
                threshold,
                left: 0,
                right: 0,
                cover: total_w,
            });
            let left = grow(x, y, balance, config, &left_idx, depth + 1, rng, nodes);
            let right = grow(x, y, balance, config, &right_idx, depth + 1, rng, nodes);
            if let ClassNode::Branch {
                left: l, right: r, ..
            } = &mut nodes[slot]
            {
                *l = left;
                *r = right;
            }
            slot
        }
    }
}
