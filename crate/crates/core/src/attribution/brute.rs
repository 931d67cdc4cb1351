//! Brute-force Shapley values by subset enumeration. This is the
//! verification oracle for the polynomial-time algorithm: it evaluates the
//! same tree-conditional expectation game directly from its definition and
//! shares no code with the fast path.

use crate::error::AttributionError;
use crate::learners::tree::{DecisionTree, Node, TreeEnsemble};

use super::{validate_covers, AttributionVector};

/// Subset value for one tree: fix the features in `mask` (positions into
/// `active`) at the sample's values and marginalize every other branch by
/// cover fractions.
fn tree_subset_value(tree: &DecisionTree, x: &[f64], active: &[usize], mask: u32) -> f64 {
    fn walk(nodes: &[Node], idx: usize, x: &[f64], active: &[usize], mask: u32) -> f64 {
        match &nodes[idx] {
            Node::Leaf { value, .. } => *value,
            Node::Branch {
                feature,
                threshold,
                left,
                right,
                cover,
            } => {
                let in_subset = active
                    .iter()
                    .position(|f| f == feature)
                    .map(|pos| mask & (1 << pos) != 0)
                    .unwrap_or(false);
                if in_subset {
                    let next = if x[*feature] < *threshold { *left } else { *right };
                    walk(nodes, next, x, active, mask)
                } else {
                    let lw = nodes[*left].cover() / cover;
                    let rw = nodes[*right].cover() / cover;
                    lw * walk(nodes, *left, x, active, mask)
                        + rw * walk(nodes, *right, x, active, mask)
                }
            }
        }
    }
    walk(&tree.nodes, 0, x, active, mask)
}

/// Exact Shapley attribution by enumerating all subsets of the ensemble's
/// active features. One vector per margin group; inactive features get
/// exactly zero. Capped at `max_features` active features.
pub fn brute_force_shapley(
    ensemble: &TreeEnsemble,
    x: &[f64],
    max_features: usize,
) -> Result<Vec<AttributionVector>, AttributionError> {
    validate_covers(ensemble)?;
    let mut active_set = std::collections::BTreeSet::new();
    for tree in &ensemble.trees {
        tree.used_features(&mut active_set);
    }
    if let Some(&max_feature) = active_set.iter().next_back() {
        if max_feature >= x.len() {
            return Err(AttributionError::DimensionMismatch {
                feature: max_feature,
                got: x.len(),
            });
        }
    }
    let active: Vec<usize> = active_set.into_iter().collect();
    let d = active.len();
    if d > max_features {
        return Err(AttributionError::TooManyFeatures {
            count: d,
            cap: max_features,
        });
    }

    // Factorial weights w(s) = s! (d-s-1)! / d! for coalition size s.
    let factorial = |n: usize| -> f64 { (1..=n).map(|v| v as f64).product() };
    let weights: Vec<f64> = (0..d.max(1))
        .map(|s| factorial(s) * factorial(d.saturating_sub(s + 1)) / factorial(d))
        .collect();

    let groups = ensemble.n_groups();
    let mut out = Vec::with_capacity(groups);
    for k in 0..groups {
        // Subset values across the group's trees, indexed by bitmask.
        let mut values = vec![0.0f64; 1usize << d];
        for (mask, value) in values.iter_mut().enumerate() {
            let mut total = ensemble.base_score[k];
            for tree in ensemble.trees_of_group(k) {
                total +=
                    ensemble.learning_rate * tree_subset_value(tree, x, &active, mask as u32);
            }
            *value = total;
        }

        let mut phi = vec![0.0; x.len()];
        for (pos, &feature) in active.iter().enumerate() {
            let bit = 1usize << pos;
            let mut total = 0.0;
            for mask in 0..values.len() {
                if mask & bit != 0 {
                    continue;
                }
                let size = (mask as u32).count_ones() as usize;
                total += weights[size] * (values[mask | bit] - values[mask]);
            }
            phi[feature] = total;
        }
        out.push(AttributionVector {
            phi,
            base_value: values[0],
            class_index: k,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::Objective;

    fn stump(feature: usize, threshold: f64, lv: f64, rv: f64, lc: f64, rc: f64) -> DecisionTree {
        DecisionTree {
            nodes: vec![
                Node::Branch {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                    cover: lc + rc,
                },
                Node::Leaf { value: lv, cover: lc },
                Node::Leaf { value: rv, cover: rc },
            ],
        }
    }

    fn binary_ensemble(trees: Vec<DecisionTree>) -> TreeEnsemble {
        TreeEnsemble {
            objective: Objective::BinaryLogistic,
            base_score: vec![0.0],
            learning_rate: 1.0,
            trees,
        }
    }

    #[test]
    fn efficiency_axiom_holds_exactly() {
        let ens = binary_ensemble(vec![
            stump(0, 0.5, -1.0, 2.0, 3.0, 1.0),
            stump(1, 0.0, 0.5, -0.5, 2.0, 2.0),
            stump(0, -0.5, 1.0, 0.25, 1.0, 3.0),
        ]);
        let x = [0.7, -0.3, 9.0];
        let attrs = brute_force_shapley(&ens, &x, 12).unwrap();
        let full = ens.margins(&x)[0];
        let reconstructed: f64 = attrs[0].base_value + attrs[0].phi.iter().sum::<f64>();
        assert!((reconstructed - full).abs() < 1e-12);
    }

    #[test]
    fn symmetry_axiom_for_identical_features() {
        // Two features used symmetrically: a tree splitting on each with the
        // same thresholds, values, and covers; x treats them identically.
        let ens = binary_ensemble(vec![
            stump(0, 0.0, -1.0, 1.0, 2.0, 2.0),
            stump(1, 0.0, -1.0, 1.0, 2.0, 2.0),
        ]);
        let x = [0.5, 0.5];
        let attrs = brute_force_shapley(&ens, &x, 12).unwrap();
        assert!((attrs[0].phi[0] - attrs[0].phi[1]).abs() < 1e-12);
    }

    #[test]
    fn dummy_axiom_unused_feature_zero() {
        let ens = binary_ensemble(vec![stump(2, 0.0, -1.0, 1.0, 1.0, 1.0)]);
        let x = [4.0, 5.0, 0.5, 6.0];
        let attrs = brute_force_shapley(&ens, &x, 12).unwrap();
        assert_eq!(attrs[0].phi[0], 0.0);
        assert_eq!(attrs[0].phi[1], 0.0);
        assert_eq!(attrs[0].phi[3], 0.0);
        assert!(attrs[0].phi[2] != 0.0);
    }

    #[test]
    fn single_leaf_tree_constant_function() {
        let ens = binary_ensemble(vec![DecisionTree::leaf(0.75, 4.0)]);
        let attrs = brute_force_shapley(&ens, &[1.0, 2.0], 12).unwrap();
        assert!(attrs[0].phi.iter().all(|p| *p == 0.0));
        assert!((attrs[0].base_value - 0.75).abs() < 1e-15);
    }

    #[test]
    fn feature_cap_enforced() {
        let trees: Vec<DecisionTree> = (0..13)
            .map(|f| stump(f, 0.0, -1.0, 1.0, 1.0, 1.0))
            .collect();
        let ens = binary_ensemble(trees);
        let x = vec![0.5; 13];
        assert!(matches!(
            brute_force_shapley(&ens, &x, 12).unwrap_err(),
            AttributionError::TooManyFeatures { count: 13, cap: 12 }
        ));
    }

    #[test]
    fn depth_one_closed_form() {
        // One stump: phi_j = f(x) - cover-weighted mean, split between the
        // only player; everything else zero.
        let tree = stump(0, 0.0, -2.0, 1.0, 1.0, 3.0);
        let expectation = tree.expectation();
        let ens = binary_ensemble(vec![tree]);
        let x = [1.0];
        let attrs = brute_force_shapley(&ens, &x, 12).unwrap();
        let f_x = ens.margins(&x)[0];
        assert!((attrs[0].phi[0] - (f_x - expectation)).abs() < 1e-12);
        assert!((attrs[0].base_value - expectation).abs() < 1e-12);
    }
}
