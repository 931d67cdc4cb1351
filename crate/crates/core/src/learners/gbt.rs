//! Second-order gradient-boosted trees with minority-class weighting.
//!
//! Each round fits a regression tree to the gradient/hessian statistics of
//! the weighted logistic (or softmax) loss. Splits are found by exact greedy
//! search over sorted unique thresholds; leaf value is -G/(H+lambda) and the
//! split gain is
//!
//!   0.5 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma.
//!
//! Minority-class samples have their gradients and hessians multiplied by
//! scale_pos_weight (binary) or the per-class balanced weight (multiclass),
//! so duplicating minority rows w times and training unweighted produces the
//! same first tree as weighting by an integer w.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::TrainError;
use crate::learners::balance::ClassBalanceInfo;
use crate::learners::tree::{sigmoid, softmax, DecisionTree, Node, Objective, TreeEnsemble};

/// Boosting configuration. The seed is carried for interface parity with the
/// sampled learners; exact greedy training is deterministic without it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 5,
            min_child_weight: 1.0,
            lambda: 1.0,
            gamma: 0.0,
            seed: 0,
        }
    }
}

impl GbtConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.max_depth == 0 {
            return Err(TrainError::InvalidConfig("max_depth must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.lambda < 0.0 || self.gamma < 0.0 || self.min_child_weight < 0.0 {
            return Err(TrainError::InvalidConfig(
                "lambda, gamma, min_child_weight must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Train a boosted ensemble. Binary labels use the logistic objective with
/// class-1 gradients scaled by `balance.scale_pos_weight`; three or more
/// classes use softmax with one tree per class per round and per-class
/// balanced weights.
pub fn train_gbt(
    x: &DenseMatrix,
    y: &[usize],
    balance: &ClassBalanceInfo,
    config: &GbtConfig,
) -> Result<TreeEnsemble, TrainError> {
    config.validate()?;
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
            return Err(TrainError::LabelOutOfRange {
                label,
                n_classes,
            });
        }
    }

    let weights: Vec<f64> = match n_classes {
        0 | 1 => return Err(TrainError::SingleClass),
        2 => y
            .iter()
            .map(|&c| if c == 1 { balance.scale_pos_weight } else { 1.0 })
            .collect(),
        _ => y.iter().map(|&c| balance.per_class_weight[c]).collect(),
    };

    let objective = if n_classes == 2 {
        Objective::BinaryLogistic
    } else {
        Objective::Softmax { n_classes }
    };
    let groups = objective.n_groups();
    let base_score = initial_base_score(y, &weights, objective);

    let sorted = presort_features(x);
    let n = x.n_rows();
    let mut margins = vec![0.0; n * groups];
    for row in 0..n {
        for k in 0..groups {
            margins[row * groups + k] = base_score[k];
        }
    }

    let mut trees = Vec::with_capacity(config.n_rounds * groups);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _round in 0..config.n_rounds {
        for k in 0..groups {
            fill_gradients(y, &weights, &margins, objective, k, &mut grad, &mut hess);
            let tree = grow_tree(x, &sorted, &grad, &hess, config);
            for row in 0..n {
                margins[row * groups + k] += config.learning_rate * tree.evaluate(x.row(row));
            }
            trees.push(tree);
        }
    }

    Ok(TreeEnsemble {
        objective,
        base_score,
        learning_rate: config.learning_rate,
        trees,
    })
}

/// Weighted log-odds (binary) or weighted log-priors (softmax) so that an
/// empty ensemble predicts the weighted base rate.
fn initial_base_score(y: &[usize], weights: &[f64], objective: Objective) -> Vec<f64> {
    match objective {
        Objective::BinaryLogistic => {
            let mut pos = 0.0;
            let mut neg = 0.0;
            for (&label, &w) in y.iter().zip(weights) {
                if label == 1 {
                    pos += w;
                } else {
                    neg += w;
                }
            }
            vec![(pos / neg).ln()]
        }
        Objective::Softmax { n_classes } => {
            let mut class_w = vec![0.0; n_classes];
            let mut total = 0.0;
            for (&label, &w) in y.iter().zip(weights) {
                class_w[label] += w;
                total += w;
            }
            class_w.into_iter().map(|w| (w / total).ln()).collect()
        }
    }
}

fn fill_gradients(
    y: &[usize],
    weights: &[f64],
    margins: &[f64],
    objective: Objective,
    group: usize,
    grad: &mut [f64],
    hess: &mut [f64],
) {
    let groups = objective.n_groups();
    match objective {
        Objective::BinaryLogistic => {
            for i in 0..y.len() {
                let p = sigmoid(margins[i]);
                let target = if y[i] == 1 { 1.0 } else { 0.0 };
                grad[i] = weights[i] * (p - target);
                hess[i] = weights[i] * p * (1.0 - p);
            }
        }
        Objective::Softmax { .. } => {
            for i in 0..y.len() {
                let row = &margins[i * groups..(i + 1) * groups];
                let p = softmax(row)[group];
                let target = if y[i] == group { 1.0 } else { 0.0 };
                grad[i] = weights[i] * (p - target);
                hess[i] = weights[i] * p * (1.0 - p);
            }
        }
    }
}

/// Per-feature row orderings, sorted by value with row index as tie-break.
fn presort_features(x: &DenseMatrix) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            let mut order: Vec<u32> = (0..x.n_rows() as u32).collect();
            order.sort_by(|&a, &b| {
                x.get(a as usize, j)
                    .partial_cmp(&x.get(b as usize, j))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl SplitCandidate {
    /// Total order: higher gain wins, ties resolved by lower feature index
    /// then lower threshold so parallel reduction is deterministic.
    fn better_than(&self, other: &Option<SplitCandidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                (self.gain, std::cmp::Reverse(self.feature)) > (o.gain, std::cmp::Reverse(o.feature))
                    || (self.gain == o.gain
                        && self.feature == o.feature
                        && self.threshold < o.threshold)
            }
        }
    }
}

struct BuildNode {
    grad_sum: f64,
    hess_sum: f64,
    split: Option<SplitCandidate>,
}

/// Level-wise exact greedy growth. `sorted` gives each feature's global row
/// order; rows route through `row_node` so every level costs one pass over
/// each feature column.
fn grow_tree(
    x: &DenseMatrix,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    config: &GbtConfig,
) -> DecisionTree {
    let n = x.n_rows();
    // Arena ids: even though the final tree is re-packed, build ids are
    // stable during growth. -1 marks rows whose node finished as a leaf.
    let mut row_node: Vec<i32> = vec![0; n];
    let mut arena: Vec<ArenaNode> = vec![ArenaNode::fresh()];
    let mut level: Vec<usize> = vec![0];

    for _depth in 0..config.max_depth {
        if level.is_empty() {
            break;
        }
        // Per-node totals.
        let mut stats: Vec<BuildNode> = level
            .iter()
            .map(|_| BuildNode {
                grad_sum: 0.0,
                hess_sum: 0.0,
                split: None,
            })
            .collect();
        let slot_of: std::collections::HashMap<usize, usize> = level
            .iter()
            .enumerate()
            .map(|(slot, &id)| (id, slot))
            .collect();
        for row in 0..n {
            if row_node[row] < 0 {
                continue;
            }
            if let Some(&slot) = slot_of.get(&(row_node[row] as usize)) {
                stats[slot].grad_sum += grad[row];
                stats[slot].hess_sum += hess[row];
            }
        }

        // Best split per node, scanned feature-parallel.
        let per_feature: Vec<Vec<Option<SplitCandidate>>> = (0..x.n_cols())
            .into_par_iter()
            .map(|feature| {
                scan_feature(
                    feature,
                    &sorted[feature],
                    x,
                    grad,
                    hess,
                    &row_node,
                    &slot_of,
                    &stats,
                    config,
                )
            })
            .collect();
        for candidates in &per_feature {
            for (slot, cand) in candidates.iter().enumerate() {
                if let Some(c) = cand {
                    if c.better_than(&stats[slot].split) {
                        stats[slot].split = Some(*c);
                    }
                }
            }
        }

        // Materialize decisions: split or settle as leaf.
        let mut next_level = Vec::new();
        for (slot, &id) in level.iter().enumerate() {
            match stats[slot].split {
                Some(split) if split.gain > 0.0 => {
                    let left = arena.len();
                    arena.push(ArenaNode::fresh());
                    let right = arena.len();
                    arena.push(ArenaNode::fresh());
                    arena[id].decision = Decision::Branch {
                        feature: split.feature,
                        threshold: split.threshold,
                        left,
                        right,
                    };
                    next_level.push(left);
                    next_level.push(right);
                }
                _ => {
                    arena[id].decision = Decision::Leaf {
                        value: leaf_value(stats[slot].grad_sum, stats[slot].hess_sum, config),
                    };
                }
            }
        }

        // Route rows into children; rows of settled nodes stop moving.
        for row in 0..n {
            if row_node[row] < 0 {
                continue;
            }
            let id = row_node[row] as usize;
            match arena[id].decision {
                Decision::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    row_node[row] = if x.get(row, feature) < threshold {
                        left as i32
                    } else {
                        right as i32
                    };
                }
                Decision::Leaf { .. } => row_node[row] = -1,
                Decision::Pending => {}
            }
        }
        level = next_level;
    }

    // Depth budget exhausted: remaining open nodes become leaves.
    if !level.is_empty() {
        let mut grad_sums = vec![0.0; arena.len()];
        let mut hess_sums = vec![0.0; arena.len()];
        for row in 0..n {
            if row_node[row] >= 0 {
                let id = row_node[row] as usize;
                grad_sums[id] += grad[row];
                hess_sums[id] += hess[row];
            }
        }
        for &id in &level {
            arena[id].decision = Decision::Leaf {
                value: leaf_value(grad_sums[id], hess_sums[id], config),
            };
        }
    }

    // Leaf covers are hessian sums over the rows that landed there; branch
    // covers are rebuilt bottom-up so cover(parent) = cover(left)+cover(right)
    // holds exactly.
    let mut leaf_cover = vec![0.0; arena.len()];
    for row in 0..n {
        let mut id = 0usize;
        loop {
            match arena[id].decision {
                Decision::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x.get(row, feature) < threshold { left } else { right };
                }
                _ => break,
            }
        }
        leaf_cover[id] += hess[row];
    }

    pack(&arena, &leaf_cover)
}

fn leaf_value(grad_sum: f64, hess_sum: f64, config: &GbtConfig) -> f64 {
    -grad_sum / (hess_sum + config.lambda)
}

enum Decision {
    Pending,
    Branch {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

struct ArenaNode {
    decision: Decision,
}

impl ArenaNode {
    fn fresh() -> Self {
        Self {
            decision: Decision::Pending,
        }
    }
}

/// Scan one feature's sorted order once, producing the best candidate for
/// every active node. Thresholds sit at midpoints between distinct values.
#[allow(clippy::too_many_arguments)]
fn scan_feature(
    feature: usize,
    order: &[u32],
    x: &DenseMatrix,
    grad: &[f64],
    hess: &[f64],
    row_node: &[i32],
    slot_of: &std::collections::HashMap<usize, usize>,
    stats: &[BuildNode],
    config: &GbtConfig,
) -> Vec<Option<SplitCandidate>> {
    let mut best: Vec<Option<SplitCandidate>> = vec![None; stats.len()];
    let mut run_g = vec![0.0; stats.len()];
    let mut run_h = vec![0.0; stats.len()];
    let mut last_value = vec![f64::NAN; stats.len()];

    for &row32 in order {
        let row = row32 as usize;
        if row_node[row] < 0 {
            continue;
        }
        let Some(&slot) = slot_of.get(&(row_node[row] as usize)) else {
            continue;
        };
        let value = x.get(row, feature);
        // A boundary between distinct values inside this node is a candidate.
        if !last_value[slot].is_nan() && value > last_value[slot] {
            let gl = run_g[slot];
            let hl = run_h[slot];
            let gr = stats[slot].grad_sum - gl;
            let hr = stats[slot].hess_sum - hl;
            if hl >= config.min_child_weight && hr >= config.min_child_weight {
                let parent = stats[slot].grad_sum * stats[slot].grad_sum
                    / (stats[slot].hess_sum + config.lambda);
                let gain = 0.5
                    * (gl * gl / (hl + config.lambda) + gr * gr / (hr + config.lambda) - parent)
                    - config.gamma;
                let candidate = SplitCandidate {
                    gain,
                    feature,
                    threshold: 0.5 * (last_value[slot] + value),
                };
                if candidate.gain > 0.0 && candidate.better_than(&best[slot]) {
                    best[slot] = Some(candidate);
                }
            }
        }
        run_g[slot] += grad[row];
        run_h[slot] += hess[row];
        last_value[slot] = value;
    }
    best
}

/// Re-pack the build arena into the contiguous node-array layout.
fn pack(arena: &[ArenaNode], leaf_cover: &[f64]) -> DecisionTree {
    fn cover_of(arena: &[ArenaNode], leaf_cover: &[f64], id: usize) -> f64 {
        match arena[id].decision {
            Decision::Branch { left, right, .. } => {
                cover_of(arena, leaf_cover, left) + cover_of(arena, leaf_cover, right)
            }
            _ => leaf_cover[id],
        }
    }
    fn emit(
        arena: &[ArenaNode],
        leaf_cover: &[f64],
        id: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let slot = nodes.len();
        match arena[id].decision {
            Decision::Branch {
                feature,
                threshold,
                left,
                right,
            } => {
                nodes.push(Node::Branch {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                    cover: cover_of(arena, leaf_cover, id),
                });
                let l = emit(arena, leaf_cover, left, nodes);
                let r = emit(arena, leaf_cover, right, nodes);
                if let Node::Branch { left, right, .. } = &mut nodes[slot] {
                    *left = l;
                    *right = r;
                }
            }
            Decision::Leaf { value } => nodes.push(Node::Leaf {
                value,
                cover: leaf_cover[id],
            }),
            Decision::Pending => unreachable!("pending node survived growth"),
        }
        slot
    }
    let mut nodes = Vec::new();
    emit(arena, leaf_cover, 0, &mut nodes);
    DecisionTree { nodes }
}

/// Weighted training loss of an ensemble, used by the monotonicity tests.
pub fn weighted_log_loss(
    ensemble: &TreeEnsemble,
    x: &DenseMatrix,
    y: &[usize],
    balance: &ClassBalanceInfo,
) -> f64 {
    let n_classes = balance.n_classes();
    let mut total = 0.0;
    for i in 0..x.n_rows() {
        let w = if n_classes == 2 {
            if y[i] == 1 {
                balance.scale_pos_weight
            } else {
                1.0
            }
        } else {
            balance.per_class_weight[y[i]]
        };
        let p = ensemble.predict_proba_row(x.row(i))[y[i]].max(1e-300);
        total -= w * p.ln();
    }
    total
}
