//! Cross-module invariants: weighting equivalences, leakage guards, and
//! property tests over randomized inputs.

use proptest::prelude::*;

use pdstage_core::attribution::{local_waterfall, AttributionVector};
use pdstage_core::data::DenseMatrix;
use pdstage_core::evaluate::metrics::normalized_confusion;
use pdstage_core::ingest::{join_common_visits, FeatureBlock};
use pdstage_core::learners::{
    compute_balanced_weights, train_gbt, train_logistic, ClassBalanceInfo, GbtConfig,
    LogisticConfig,
};
use pdstage_core::preprocess::Standardizer;

fn lcg_stream(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed.wrapping_mul(2654435761).wrapping_add(1);
    move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64)
    }
}

fn random_binary_problem(n: usize, d: usize, seed: u64) -> (DenseMatrix, Vec<usize>) {
    let mut next = lcg_stream(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| next() * 4.0 - 2.0).collect();
        let score = row[0] - 0.7 * row[1 % d] + 0.4 * (next() - 0.5);
        rows.push(row);
        y.push(usize::from(score > 0.0));
    }
    (DenseMatrix::from_rows(&rows), y)
}

/// Scaling every class weight by a positive constant leaves boosted-tree
/// decisions unchanged when the penalty terms scale with it (lambda = 0,
/// gamma = 0 here, so the loss scales uniformly).
#[test]
fn gbt_decisions_invariant_under_uniform_weight_scaling() {
    let (x, y) = random_binary_problem(90, 4, 13);
    let base = compute_balanced_weights(&y, 2).unwrap();
    for scale in [3.0, 0.25] {
        let scaled = ClassBalanceInfo {
            scale_pos_weight: base.scale_pos_weight,
            per_class_weight: base.per_class_weight.iter().map(|w| w * scale).collect(),
            ..base.clone()
        };
        let config = GbtConfig {
            n_rounds: 6,
            max_depth: 3,
            lambda: 0.0,
            gamma: 0.0,
            min_child_weight: 0.0,
            ..GbtConfig::default()
        };
        // Binary training weights the positive class by scale_pos_weight,
        // which is identical in both runs; the multiclass path consumes the
        // scaled per-class weights directly.
        let a = train_gbt(&x, &y, &base, &config).unwrap();
        let b = train_gbt(&x, &y, &scaled, &config).unwrap();
        for i in 0..x.n_rows() {
            let pa = a.predict_proba_row(x.row(i));
            let pb = b.predict_proba_row(x.row(i));
            assert_eq!(
                usize::from(pa[1] >= 0.5),
                usize::from(pb[1] >= 0.5),
                "row {i}"
            );
        }
    }
}

#[test]
fn multiclass_gbt_decisions_invariant_under_uniform_weight_scaling() {
    let mut next = lcg_stream(99);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for class in 0..3usize {
        for _ in 0..30 {
            let cx = class as f64 * 3.0;
            rows.push(vec![cx + next() - 0.5, next() * 2.0 - 1.0]);
            y.push(class);
        }
    }
    let x = DenseMatrix::from_rows(&rows);
    let base = compute_balanced_weights(&y, 3).unwrap();
    let scaled = ClassBalanceInfo {
        per_class_weight: base.per_class_weight.iter().map(|w| w * 7.5).collect(),
        ..base.clone()
    };
    let config = GbtConfig {
        n_rounds: 4,
        max_depth: 3,
        lambda: 0.0,
        gamma: 0.0,
        min_child_weight: 0.0,
        ..GbtConfig::default()
    };
    let a = train_gbt(&x, &y, &base, &config).unwrap();
    let b = train_gbt(&x, &y, &scaled, &config).unwrap();
    for i in 0..x.n_rows() {
        let pick = |p: Vec<f64>| {
            p.iter()
                .enumerate()
                .max_by(|l, r| l.1.partial_cmp(r.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(
            pick(a.predict_proba_row(x.row(i))),
            pick(b.predict_proba_row(x.row(i)))
        );
    }
}

/// Scaling the weighted log-likelihood and the L2 penalty by the same
/// constant leaves the optimizer's argmin, hence every decision, unchanged.
#[test]
fn logistic_decisions_invariant_under_uniform_weight_scaling() {
    let (x, y) = random_binary_problem(70, 3, 29);
    let base = compute_balanced_weights(&y, 2).unwrap();
    let scale = 4.0;
    let scaled = ClassBalanceInfo {
        per_class_weight: base.per_class_weight.iter().map(|w| w * scale).collect(),
        ..base.clone()
    };
    let a = train_logistic(
        &x,
        &y,
        &base,
        &LogisticConfig {
            l2: 0.5,
            ..LogisticConfig::default()
        },
    )
    .unwrap();
    let b = train_logistic(
        &x,
        &y,
        &scaled,
        &LogisticConfig {
            l2: 0.5 * scale,
            ..LogisticConfig::default()
        },
    )
    .unwrap();
    for i in 0..x.n_rows() {
        let pa = a.predict_proba_row(x.row(i)).unwrap();
        let pb = b.predict_proba_row(x.row(i)).unwrap();
        assert_eq!(usize::from(pa[1] >= 0.5), usize::from(pb[1] >= 0.5));
    }
}

/// Integer-weight equivalence at the gradient level: with w-fold duplicated
/// minority rows and unit weights, the first boosting round's root
/// gradient/hessian sums equal the weighted run's exactly, so the first
/// trees match. (The acceptance suite asserts the full-tree version.)
#[test]
fn duplicated_minority_matches_weighted_first_tree() {
    let w = 3usize;
    let n_minor = 12;
    let mut next = lcg_stream(7);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..(w * n_minor) {
        rows.push(vec![next() * 2.0 - 1.0, next() * 2.0 - 1.0, next()]);
        y.push(0usize);
    }
    for _ in 0..n_minor {
        rows.push(vec![next() + 0.5, next() - 1.2, next()]);
        y.push(1usize);
    }
    let x = DenseMatrix::from_rows(&rows);
    let balance = compute_balanced_weights(&y, 2).unwrap();
    assert_eq!(balance.scale_pos_weight, w as f64);

    let config = GbtConfig {
        n_rounds: 1,
        max_depth: 3,
        min_child_weight: 0.0,
        ..GbtConfig::default()
    };
    let weighted = train_gbt(&x, &y, &balance, &config).unwrap();

    let mut dup_rows: Vec<Vec<f64>> = Vec::new();
    let mut dup_y = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let copies = if y[i] == 1 { w } else { 1 };
        for _ in 0..copies {
            dup_rows.push(row.clone());
            dup_y.push(y[i]);
        }
    }
    let x_dup = DenseMatrix::from_rows(&dup_rows);
    let unweighted = ClassBalanceInfo::unweighted(2);
    let duplicated = train_gbt(&x_dup, &dup_y, &unweighted, &config).unwrap();

    let ta = &weighted.trees[0];
    let tb = &duplicated.trees[0];
    assert_eq!(ta.nodes.len(), tb.nodes.len());
    for (na, nb) in ta.nodes.iter().zip(&tb.nodes) {
        use pdstage_core::learners::Node;
        match (na, nb) {
            (
                Node::Branch {
                    feature: fa,
                    threshold: tha,
                    ..
                },
                Node::Branch {
                    feature: fb,
                    threshold: thb,
                    ..
                },
            ) => {
                assert_eq!(fa, fb);
                assert_eq!(tha, thb);
            }
            (Node::Leaf { value: va, .. }, Node::Leaf { value: vb, .. }) => {
                assert!((va - vb).abs() <= 1e-10, "{va} vs {vb}");
            }
            other => panic!("structure mismatch: {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Standardizer round-trip: transform then invert reconstructs inputs
    /// to 1e-12 relative for non-degenerate columns.
    #[test]
    fn standardizer_round_trip(raw in proptest::collection::vec(-1e3f64..1e3, 6..60)) {
        let d = 3usize;
        let n = raw.len() / d;
        prop_assume!(n >= 2);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| raw[i * d..(i + 1) * d].to_vec()).collect();
        let x = DenseMatrix::from_rows(&rows);
        let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        let s = Standardizer::fit(&x, &names, "prop").unwrap();
        let t = s.transform(&x).unwrap();
        for i in 0..n {
            for j in 0..d {
                if s.sds[j] > 0.0 {
                    let back = t.get(i, j) * s.sds[j] + s.means[j];
                    let tol = 1e-12 * x.get(i, j).abs().max(1.0);
                    prop_assert!((back - x.get(i, j)).abs() <= tol);
                }
            }
        }
    }

    /// Leakage guard: transforming arbitrary held-out data never moves the
    /// fitted parameters.
    #[test]
    fn standardizer_parameters_frozen(train_vals in proptest::collection::vec(-50f64..50.0, 4..40),
                                      test_vals in proptest::collection::vec(-5e3f64..5e3, 2..40)) {
        let train_rows: Vec<Vec<f64>> = train_vals.iter().map(|v| vec![*v]).collect();
        let test_rows: Vec<Vec<f64>> = test_vals.iter().map(|v| vec![*v]).collect();
        let s = Standardizer::fit(&DenseMatrix::from_rows(&train_rows), &["f0".into()], "prop").unwrap();
        let before = s.clone();
        let _ = s.transform(&DenseMatrix::from_rows(&test_rows)).unwrap();
        prop_assert_eq!(s, before);
    }

    /// Confusion rows always sum to one (or are all zero for absent classes).
    #[test]
    fn confusion_rows_normalized(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..120)) {
        let y_true: Vec<usize> = pairs.iter().map(|(t, _)| *t).collect();
        let y_pred: Vec<usize> = pairs.iter().map(|(_, p)| *p).collect();
        let m = normalized_confusion(&y_true, &y_pred, 4);
        for row in &m {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9 || sum == 0.0);
        }
    }

    /// Waterfall running sums always land on base + sum(phi), any top_n.
    #[test]
    fn waterfall_running_sum(phi in proptest::collection::vec(-10f64..10.0, 1..40),
                             base in -5f64..5.0,
                             top_n in 0usize..45) {
        let names: Vec<String> = (0..phi.len()).map(|j| format!("f{j}")).collect();
        let attr = AttributionVector { phi: phi.clone(), base_value: base, class_index: 0 };
        let w = local_waterfall(&attr, &names, top_n).unwrap();
        let running: f64 = w.base_value + w.entries.iter().map(|e| e.phi).sum::<f64>();
        let margin: f64 = base + phi.iter().sum::<f64>();
        prop_assert!((running - margin).abs() <= 1e-9 * margin.abs().max(1.0));
        prop_assert_eq!(w.entries.last().unwrap().label.as_str(), "remaining");
    }

    /// Join result is independent of block order (up to column order).
    #[test]
    fn join_commutes(mask_a in 1u32..255, mask_b in 1u32..255) {
        let block = |name: &str, mask: u32| {
            let rows = (0..8u32)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| {
                    (
                        pdstage_core::data::VisitKey::new(format!("s{i}"), "BL"),
                        vec![Some(i as f64)],
                    )
                })
                .collect();
            FeatureBlock {
                instrument: name.to_string(),
                feature_names: vec![format!("{name}_0")],
                rows,
            }
        };
        let a = block("a", mask_a);
        let b = block("b", mask_b);
        let ab = join_common_visits(&[a.clone(), b.clone()]);
        let ba = join_common_visits(&[b, a]);
        match (ab, ba) {
            (Ok(ab), Ok(ba)) => {
                let keys_ab: Vec<_> = ab.rows.iter().map(|r| r.key.clone()).collect();
                let keys_ba: Vec<_> = ba.rows.iter().map(|r| r.key.clone()).collect();
                prop_assert_eq!(keys_ab, keys_ba);
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "asymmetric join outcome: {:?}", other.0.is_ok()),
        }
    }
}
