//! Path-dependent TreeSHAP: exact Shapley values of the tree-conditional
//! expectation game in polynomial time. Unvisited branches are marginalized
//! by cover fractions; attributions of a multi-tree ensemble are the sums of
//! per-tree attributions (the game is additive across trees).

use crate::error::AttributionError;
use crate::learners::tree::{DecisionTree, Node, TreeEnsemble};

use super::{validate_covers, AttributionVector};

/// Exact Shapley attribution of the margin for one sample. Returns one
/// vector per margin group (one for binary, per class for softmax), each in
/// margin space with base_value + sum(phi) equal to the group's margin.
pub fn tree_shap(
    ensemble: &TreeEnsemble,
    x: &[f64],
) -> Result<Vec<AttributionVector>, AttributionError> {
    validate_covers(ensemble)?;
    for (t, tree) in ensemble.trees.iter().enumerate() {
        for node in &tree.nodes {
            if let Node::Branch { feature, .. } = node {
                if *feature >= x.len() {
                    let _ = t;
                    return Err(AttributionError::DimensionMismatch {
                        feature: *feature,
                        got: x.len(),
                    });
                }
            }
        }
    }

    let groups = ensemble.n_groups();
    let mut out = Vec::with_capacity(groups);
    for k in 0..groups {
        let mut phi = vec![0.0; x.len()];
        let mut base = ensemble.base_score[k];
        for tree in ensemble.trees_of_group(k) {
            single_tree_shap(tree, x, ensemble.learning_rate, &mut phi);
            base += ensemble.learning_rate * tree.expectation();
        }
        out.push(AttributionVector {
            phi,
            base_value: base,
            class_index: k,
        });
    }
    Ok(out)
}

/// One path element: the feature that split the path, the fraction of cover
/// flowing through when the feature is unknown (zero fraction), whether the
/// sample's value follows this path (one fraction), and the accumulated
/// permutation weight.
#[derive(Clone, Copy)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

impl PathElement {
    fn blank() -> Self {
        Self {
            feature: usize::MAX,
            zero_fraction: 0.0,
            one_fraction: 0.0,
            pweight: 0.0,
        }
    }
}

fn single_tree_shap(tree: &DecisionTree, x: &[f64], scale: f64, phi: &mut [f64]) {
    let depth_bound = tree.max_depth() + 2;
    let mut path = vec![PathElement::blank(); depth_bound * (depth_bound + 1) / 2];
    recurse(tree, x, scale, phi, 0, &mut path, 0, 1.0, 1.0, usize::MAX);
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &DecisionTree,
    x: &[f64],
    scale: f64,
    phi: &mut [f64],
    node_index: usize,
    unique_path: &mut [PathElement],
    unique_depth: usize,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature: usize,
) {
    extend_path(
        unique_path,
        unique_depth,
        parent_zero_fraction,
        parent_one_fraction,
        parent_feature,
    );
    let mut unique_depth = unique_depth;

    match &tree.nodes[node_index] {
        Node::Leaf { value, .. } => {
            for path_index in 1..=unique_depth {
                let weight = unwound_path_sum(unique_path, unique_depth, path_index);
                let element = unique_path[path_index];
                phi[element.feature] +=
                    scale * weight * (element.one_fraction - element.zero_fraction) * value;
            }
        }
        Node::Branch {
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if x[*feature] < *threshold {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let hot_zero_fraction = tree.nodes[hot].cover() / cover;
            let cold_zero_fraction = tree.nodes[cold].cover() / cover;
            let mut incoming_zero_fraction = 1.0;
            let mut incoming_one_fraction = 1.0;

            // A feature already on the path is unwound and its fractions
            // fold into this deeper occurrence.
            if let Some(path_index) =
                (1..=unique_depth).find(|&i| unique_path[i].feature == *feature)
            {
                incoming_zero_fraction = unique_path[path_index].zero_fraction;
                incoming_one_fraction = unique_path[path_index].one_fraction;
                unwind_path(unique_path, unique_depth, path_index);
                unique_depth -= 1;
            }

            let (parent_path, child_path) = unique_path.split_at_mut(unique_depth + 1);
            child_path[..parent_path.len()].copy_from_slice(parent_path);
            recurse(
                tree,
                x,
                scale,
                phi,
                hot,
                child_path,
                unique_depth + 1,
                hot_zero_fraction * incoming_zero_fraction,
                incoming_one_fraction,
                *feature,
            );
            child_path[..parent_path.len()].copy_from_slice(parent_path);
            recurse(
                tree,
                x,
                scale,
                phi,
                cold,
                child_path,
                unique_depth + 1,
                cold_zero_fraction * incoming_zero_fraction,
                0.0,
                *feature,
            );
        }
    }
}

fn extend_path(
    unique_path: &mut [PathElement],
    unique_depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature: usize,
) {
    unique_path[unique_depth] = PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if unique_depth == 0 { 1.0 } else { 0.0 },
    };
    for i in (0..unique_depth).rev() {
        unique_path[i + 1].pweight +=
            one_fraction * unique_path[i].pweight * (i + 1) as f64 / (unique_depth + 1) as f64;
        unique_path[i].pweight =
            zero_fraction * unique_path[i].pweight * (unique_depth - i) as f64
                / (unique_depth + 1) as f64;
    }
}

fn unwind_path(unique_path: &mut [PathElement], unique_depth: usize, path_index: usize) {
    let one_fraction = unique_path[path_index].one_fraction;
    let zero_fraction = unique_path[path_index].zero_fraction;
    let mut next_one_portion = unique_path[unique_depth].pweight;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = unique_path[i].pweight;
            unique_path[i].pweight =
                next_one_portion * (unique_depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one_portion = tmp
                - unique_path[i].pweight * zero_fraction * (unique_depth - i) as f64
                    / (unique_depth + 1) as f64;
        } else {
            unique_path[i].pweight = unique_path[i].pweight * (unique_depth + 1) as f64
                / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    for i in path_index..unique_depth {
        unique_path[i].feature = unique_path[i + 1].feature;
        unique_path[i].zero_fraction = unique_path[i + 1].zero_fraction;
        unique_path[i].one_fraction = unique_path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(unique_path: &[PathElement], unique_depth: usize, path_index: usize) -> f64 {
    let one_fraction = unique_path[path_index].one_fraction;
    let zero_fraction = unique_path[path_index].zero_fraction;
    let mut next_one_portion = unique_path[unique_depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..unique_depth).rev() {
            let tmp = next_one_portion / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one_portion =
                unique_path[i].pweight - tmp * zero_fraction * (unique_depth - i) as f64;
        }
    } else {
        for i in (0..unique_depth).rev() {
            total += unique_path[i].pweight / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    total * (unique_depth + 1) as f64
}
