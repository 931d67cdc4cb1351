//! Regression-tree and additive-ensemble types shared by the boosted-tree
//! trainer and the attribution module.

use serde::{Deserialize, Serialize};

/// One tree node. Branches route `x[feature] < threshold` to `left`,
/// otherwise to `right`. Cover is the summed training hessian (or sample
/// weight) that reached the node; attribution marginalizes unvisited
/// branches with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Branch {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Branch { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// A single regression tree stored as a node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    /// Value of the leaf the sample routes to.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value, .. } => return *value,
                Node::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Longest root-to-leaf path length in edges.
    pub fn max_depth(&self) -> usize {
        fn depth(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Branch { left, right, .. } => {
                    1 + depth(nodes, *left).max(depth(nodes, *right))
                }
            }
        }
        depth(&self.nodes, 0)
    }

    /// Cover-weighted expectation of the tree output (the value an
    /// uninformed traversal would produce).
    pub fn expectation(&self) -> f64 {
        fn walk(nodes: &[Node], idx: usize) -> f64 {
            match &nodes[idx] {
                Node::Leaf { value, .. } => *value,
                Node::Branch {
                    left, right, cover, ..
                } => {
                    let lw = nodes[*left].cover() / cover;
                    let rw = nodes[*right].cover() / cover;
                    lw * walk(nodes, *left) + rw * walk(nodes, *right)
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Feature indices used by any branch.
    pub fn used_features(&self, out: &mut std::collections::BTreeSet<usize>) {
        for node in &self.nodes {
            if let Node::Branch { feature, .. } = node {
                out.insert(*feature);
            }
        }
    }
}

/// Link function of the ensemble output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Single margin, probability via the logistic sigmoid.
    BinaryLogistic,
    /// One margin per class, probability via softmax. Trees are stored
    /// round-major: tree `t` belongs to class `t % n_classes`.
    Softmax { n_classes: usize },
}

impl Objective {
    pub fn n_groups(&self) -> usize {
        match self {
            Objective::BinaryLogistic => 1,
            Objective::Softmax { n_classes } => *n_classes,
        }
    }
}

/// Additive tree ensemble: margin(x) = base_score + sum_t lr * tree_t(x),
/// per class for the softmax objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub objective: Objective,
    /// One entry for binary logistic, one per class for softmax.
    pub base_score: Vec<f64>,
    pub learning_rate: f64,
    pub trees: Vec<DecisionTree>,
}

impl TreeEnsemble {
    pub fn n_groups(&self) -> usize {
        self.objective.n_groups()
    }

    /// Trees belonging to margin group `k`.
    pub fn trees_of_group(&self, k: usize) -> impl Iterator<Item = &DecisionTree> {
        let groups = self.n_groups();
        self.trees
            .iter()
            .enumerate()
            .filter(move |(t, _)| t % groups == k)
            .map(|(_, tree)| tree)
    }

    /// Per-group margins for one sample.
    pub fn margins(&self, x: &[f64]) -> Vec<f64> {
        let groups = self.n_groups();
        let mut out = self.base_score.clone();
        for (t, tree) in self.trees.iter().enumerate() {
            out[t % groups] += self.learning_rate * tree.evaluate(x);
        }
        out
    }

    /// Class probabilities for one sample. Binary ensembles return
    /// [1 - p, p] so the column layout matches the number of classes.
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let margins = self.margins(x);
        match self.objective {
            Objective::BinaryLogistic => {
                let p = sigmoid(margins[0]);
                vec![1.0 - p, p]
            }
            Objective::Softmax { .. } => softmax(&margins),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self.objective {
            Objective::BinaryLogistic => 2,
            Objective::Softmax { n_classes } => n_classes,
        }
    }

    /// Per-group expected margin over the training distribution implied by
    /// node covers; the base value reported by attribution.
    pub fn expected_margins(&self) -> Vec<f64> {
        let groups = self.n_groups();
        let mut out = self.base_score.clone();
        for (t, tree) in self.trees.iter().enumerate() {
            out[t % groups] += self.learning_rate * tree.expectation();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
