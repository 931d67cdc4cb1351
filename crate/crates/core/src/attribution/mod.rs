//! Shapley attribution for tree ensembles and the three aggregation
//! artifacts built from it: class-stacked global summaries, the cross-task
//! top-k-union table, and per-sample waterfall data.

pub mod brute;
pub mod treeshap;

pub use brute::brute_force_shapley;
pub use treeshap::tree_shap;

use serde::{Deserialize, Serialize};

use crate::error::AttributionError;
use crate::learners::tree::{Node, TreeEnsemble};

/// Per-feature Shapley values for one sample and one margin group, in
/// margin (log-odds) space. base_value + sum(phi) equals the model margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub phi: Vec<f64>,
    pub base_value: f64,
    /// Margin group: 0 for binary ensembles, class index under softmax.
    pub class_index: usize,
}

/// Attribution needs positive, finite covers on every node.
pub(crate) fn validate_covers(ensemble: &TreeEnsemble) -> Result<(), AttributionError> {
    for (t, tree) in ensemble.trees.iter().enumerate() {
        for (n, node) in tree.nodes.iter().enumerate() {
            let cover = node.cover();
            if !(cover.is_finite() && cover > 0.0) {
                return Err(AttributionError::MissingCover {
                    tree: t,
                    node: n,
                    cover,
                });
            }
            if let Node::Branch { left, right, .. } = node {
                let child_sum = tree.nodes[*left].cover() + tree.nodes[*right].cover();
                if !(child_sum.is_finite() && child_sum > 0.0) {
                    return Err(AttributionError::MissingCover {
                        tree: t,
                        node: n,
                        cover: child_sum,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Cohort-decomposed global importance. For every feature:
/// `combined_mean_abs` is mean |phi| over all samples, `cohort_mean_abs`
/// the mean within each cohort, and `cohort_contribution` the cohort's
/// stacked share (cohort mean scaled by cohort fraction), which sums across
/// cohorts to the combined total. Signed cohort means ride along for
/// directional reading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub feature_names: Vec<String>,
    pub cohort_names: Vec<String>,
    pub cohort_sizes: Vec<usize>,
    /// [cohort][feature] mean of |phi| within the cohort.
    pub cohort_mean_abs: Vec<Vec<f64>>,
    /// [cohort][feature] mean of signed phi within the cohort.
    pub cohort_mean_signed: Vec<Vec<f64>>,
    /// [cohort][feature] stacked share: cohort_mean_abs * n_c / N.
    pub cohort_contribution: Vec<Vec<f64>>,
    /// [feature] mean |phi| over all samples.
    pub combined_mean_abs: Vec<f64>,
    /// Indices of the top-k features by combined mean |phi|, ties broken
    /// lexicographically by feature name.
    pub top_k: Vec<usize>,
}

/// Build the global summary from one phi vector per sample (the true-class
/// vector for multiclass models) and each sample's cohort index.
pub fn global_class_summary(
    attributions: &[Vec<f64>],
    cohorts: &[usize],
    cohort_names: &[String],
    feature_names: &[String],
    k: usize,
) -> Result<GlobalSummary, AttributionError> {
    let d = feature_names.len();
    if attributions.len() != cohorts.len() {
        return Err(AttributionError::LengthMismatch {
            expected: cohorts.len(),
            got: attributions.len(),
        });
    }
    for phi in attributions {
        if phi.len() != d {
            return Err(AttributionError::LengthMismatch {
                expected: d,
                got: phi.len(),
            });
        }
    }
    let n_cohorts = cohort_names.len();
    let mut sizes = vec![0usize; n_cohorts];
    for &c in cohorts {
        sizes[c] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(AttributionError::EmptyCohort {
            cohort: cohort_names[empty].clone(),
        });
    }

    let n = attributions.len() as f64;
    let mut sum_abs = vec![vec![0.0; d]; n_cohorts];
    let mut sum_signed = vec![vec![0.0; d]; n_cohorts];
    for (phi, &c) in attributions.iter().zip(cohorts) {
        for j in 0..d {
            sum_abs[c][j] += phi[j].abs();
            sum_signed[c][j] += phi[j];
        }
    }
    let cohort_mean_abs: Vec<Vec<f64>> = sum_abs
        .iter()
        .enumerate()
        .map(|(c, sums)| sums.iter().map(|s| s / sizes[c] as f64).collect())
        .collect();
    let cohort_mean_signed: Vec<Vec<f64>> = sum_signed
        .iter()
        .enumerate()
        .map(|(c, sums)| sums.iter().map(|s| s / sizes[c] as f64).collect())
        .collect();
    let cohort_contribution: Vec<Vec<f64>> = sum_abs
        .iter()
        .map(|sums| sums.iter().map(|s| s / n).collect())
        .collect();
    let combined_mean_abs: Vec<f64> = (0..d)
        .map(|j| sum_abs.iter().map(|c| c[j]).sum::<f64>() / n)
        .collect();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        combined_mean_abs[b]
            .partial_cmp(&combined_mean_abs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| feature_names[a].cmp(&feature_names[b]))
    });
    let top_k: Vec<usize> = order.into_iter().take(k).collect();

    Ok(GlobalSummary {
        feature_names: feature_names.to_vec(),
        cohort_names: cohort_names.to_vec(),
        cohort_sizes: sizes,
        cohort_mean_abs,
        cohort_mean_signed,
        cohort_contribution,
        combined_mean_abs,
        top_k,
    })
}

/// Cross-task comparison table: rows are the exact union of the per-task
/// top-k feature lists; a cell holds the combined-cohort mean |phi| when the
/// feature made that task's top-k and is empty otherwise. Shade intensities
/// normalize each column to its maximum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapTable {
    pub feature_rows: Vec<String>,
    pub task_names: Vec<String>,
    /// [row][task] raw value, None outside that task's top-k.
    pub cells: Vec<Vec<Option<f64>>>,
    /// [row][task] per-column normalized intensity in [0, 1].
    pub shades: Vec<Vec<Option<f64>>>,
}

pub fn cross_task_heatmap(
    summaries: &[&GlobalSummary],
    task_names: &[String],
    k: usize,
) -> Result<HeatmapTable, AttributionError> {
    if summaries.len() != 3 || task_names.len() != 3 {
        return Err(AttributionError::WrongSummaryCount {
            got: summaries.len(),
        });
    }

    // Per-task top-k name -> value maps.
    let mut per_task: Vec<std::collections::BTreeMap<&str, f64>> = Vec::with_capacity(3);
    for summary in summaries {
        let map = summary
            .top_k
            .iter()
            .take(k)
            .map(|&j| (summary.feature_names[j].as_str(), summary.combined_mean_abs[j]))
            .collect();
        per_task.push(map);
    }

    // Union of the top-k lists; ordered by the strongest cell anywhere,
    // ties lexicographic, so the table is deterministic.
    let mut union: Vec<&str> = per_task
        .iter()
        .flat_map(|m| m.keys().copied())
        .collect::<std::collections::BTreeSet<&str>>()
        .into_iter()
        .collect();
    union.sort_by(|a, b| {
        let strength = |name: &str| {
            per_task
                .iter()
                .filter_map(|m| m.get(name).copied())
                .fold(f64::NEG_INFINITY, f64::max)
        };
        strength(b)
            .partial_cmp(&strength(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(b))
    });

    let cells: Vec<Vec<Option<f64>>> = union
        .iter()
        .map(|name| per_task.iter().map(|m| m.get(name).copied()).collect())
        .collect();
    let mut shades = vec![vec![None; 3]; union.len()];
    for task in 0..3 {
        let column_max = cells
            .iter()
            .filter_map(|row| row[task])
            .fold(0.0f64, f64::max);
        for (r, row) in cells.iter().enumerate() {
            shades[r][task] = row[task].map(|v| if column_max > 0.0 { v / column_max } else { 0.0 });
        }
    }

    Ok(HeatmapTable {
        feature_rows: union.into_iter().map(str::to_string).collect(),
        task_names: task_names.to_vec(),
        cells,
        shades,
    })
}

/// One waterfall entry: a named feature contribution, or the collapsed tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallEntry {
    pub label: String,
    pub phi: f64,
}

/// Per-sample waterfall data: contributions sorted by |phi| descending,
/// zero-phi features and everything beyond `top_n` collapsed into one
/// "remaining" entry equal to the sum of the collapsed phis, so the running
/// sum from base_value still lands on the model margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waterfall {
    pub base_value: f64,
    pub entries: Vec<WaterfallEntry>,
    pub total: f64,
}

pub fn local_waterfall(
    attribution: &AttributionVector,
    feature_names: &[String],
    top_n: usize,
) -> Result<Waterfall, AttributionError> {
    if attribution.phi.len() != feature_names.len() {
        return Err(AttributionError::LengthMismatch {
            expected: feature_names.len(),
            got: attribution.phi.len(),
        });
    }
    let mut order: Vec<usize> = (0..attribution.phi.len()).collect();
    order.sort_by(|&a, &b| {
        attribution.phi[b]
            .abs()
            .partial_cmp(&attribution.phi[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut entries = Vec::new();
    let mut remaining = 0.0;
    for (rank, &j) in order.iter().enumerate() {
        let phi = attribution.phi[j];
        if rank < top_n && phi != 0.0 {
            entries.push(WaterfallEntry {
                label: feature_names[j].clone(),
                phi,
            });
        } else {
            remaining += phi;
        }
    }
    entries.push(WaterfallEntry {
        label: "remaining".to_string(),
        phi: remaining,
    });
    let total = attribution.base_value + attribution.phi.iter().sum::<f64>();
    Ok(Waterfall {
        base_value: attribution.base_value,
        entries,
        total,
    })
}
