//! Stratified holdout and k-fold splitting, with an optional subject-grouped
//! mode that keeps all visits of a subject in one partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::EvalError;

/// Indices per class, shuffled deterministically per seed.
fn shuffled_class_indices(
    labels: &[usize],
    n_classes: usize,
    seed: u64,
    min_per_class: usize,
) -> Result<Vec<Vec<usize>>, EvalError> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        per_class[label].push(i);
    }
    for (class, indices) in per_class.iter().enumerate() {
        if indices.len() < min_per_class {
            return Err(EvalError::ClassTooSmall {
                class: class.to_string(),
                count: indices.len(),
                min: min_per_class,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for indices in &mut per_class {
        indices.shuffle(&mut rng);
    }
    Ok(per_class)
}

/// Stratified holdout split. Each class contributes round(fraction * n_c)
/// rows to the test partition; assignment is deterministic per seed.
/// Returns (train, test) index lists, each sorted ascending.
pub fn stratified_holdout(
    labels: &[usize],
    n_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let per_class = shuffled_class_indices(labels, n_classes, seed, 5)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for indices in per_class {
        let n_test = (fraction * indices.len() as f64).round() as usize;
        test.extend_from_slice(&indices[..n_test]);
        train.extend_from_slice(&indices[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified k-fold plan: class rows deal round-robin into folds, so every
/// class's fold counts differ by at most one. Classes smaller than k are
/// legal (some folds then validate on zero rows of that class); a class with
/// no rows at all is an error. Returns (fit, validation) index lists per
/// fold; validation sets partition the input.
pub fn stratified_kfold(
    labels: &[usize],
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let per_class = shuffled_class_indices(labels, n_classes, seed, 1)?;
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for indices in per_class {
        for (pos, &row) in indices.iter().enumerate() {
            folds[pos % k].push(row);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    let result = (0..k)
        .map(|f| {
            let validation = folds[f].clone();
            let mut fit: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            fit.sort_unstable();
            (fit, validation)
        })
        .collect();
    Ok(result)
}

/// Subject-grouped stratified holdout: unique subjects are stratified by
/// their modal class (ties to the more severe class) and assigned whole.
/// The per-class row balance is then only approximate, which is the point
/// of the mode: no subject straddles partitions.
pub fn grouped_holdout(
    labels: &[usize],
    subjects: &[String],
    n_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let (group_labels, group_rows) = group_by_subject(labels, subjects, n_classes)?;
    let (train_groups, test_groups) =
        stratified_holdout(&group_labels, n_classes, fraction, seed)?;
    Ok((
        expand_groups(&train_groups, &group_rows),
        expand_groups(&test_groups, &group_rows),
    ))
}

/// Subject-grouped stratified k-fold; same grouping rule as
/// [`grouped_holdout`].
pub fn grouped_kfold(
    labels: &[usize],
    subjects: &[String],
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>, EvalError> {
    let (group_labels, group_rows) = group_by_subject(labels, subjects, n_classes)?;
    let folds = stratified_kfold(&group_labels, n_classes, k, seed)?;
    Ok(folds
        .into_iter()
        .map(|(fit, val)| (expand_groups(&fit, &group_rows), expand_groups(&val, &group_rows)))
        .collect())
}

fn group_by_subject(
    labels: &[usize],
    subjects: &[String],
    n_classes: usize,
) -> Result<(Vec<usize>, Vec<Vec<usize>>), EvalError> {
    if labels.len() != subjects.len() {
        return Err(EvalError::LengthMismatch {
            left: labels.len(),
            right: subjects.len(),
        });
    }
    let mut order: Vec<&String> = Vec::new();
    let mut rows_of: std::collections::BTreeMap<&String, Vec<usize>> =
        std::collections::BTreeMap::new();
    for (i, subject) in subjects.iter().enumerate() {
        let entry = rows_of.entry(subject).or_insert_with(|| {
            order.push(subject);
            Vec::new()
        });
        entry.push(i);
    }
    let mut group_labels = Vec::with_capacity(order.len());
    let mut group_rows = Vec::with_capacity(order.len());
    for subject in order {
        let rows = &rows_of[subject];
        let mut counts = vec![0usize; n_classes];
        for &r in rows {
            counts[labels[r]] += 1;
        }
        // Modal class; ties resolve to the higher (more severe) class index.
        let modal = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(c, _)| c)
            .unwrap_or(0);
        group_labels.push(modal);
        group_rows.push(rows.clone());
    }
    Ok((group_labels, group_rows))
}

fn expand_groups(groups: &[usize], group_rows: &[Vec<usize>]) -> Vec<usize> {
    let mut rows: Vec<usize> = groups
        .iter()
        .flat_map(|&g| group_rows[g].iter().copied())
        .collect();
    rows.sort_unstable();
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(counts: &[usize]) -> Vec<usize> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat(c).take(n))
            .collect()
    }

    #[test]
    fn holdout_80_20_class_counts() {
        let y = labels(&[80, 20]);
        let (train, test) = stratified_holdout(&y, 2, 0.2, 7).unwrap();
        assert_eq!(test.len(), 20);
        assert_eq!(train.len(), 80);
        let test_class1 = test.iter().filter(|&&i| y[i] == 1).count();
        assert_eq!(test_class1, 4);
        assert_eq!(test.len() - test_class1, 16);
    }

    #[test]
    fn holdout_balanced_exact_proportion() {
        let y = labels(&[10, 10]);
        let (_, test) = stratified_holdout(&y, 2, 0.2, 3).unwrap();
        let c0 = test.iter().filter(|&&i| y[i] == 0).count();
        let c1 = test.len() - c0;
        assert_eq!((c0, c1), (2, 2));
    }

    #[test]
    fn holdout_deterministic_per_seed() {
        let y = labels(&[40, 25]);
        let a = stratified_holdout(&y, 2, 0.2, 11).unwrap();
        let b = stratified_holdout(&y, 2, 0.2, 11).unwrap();
        assert_eq!(a, b);
        let c = stratified_holdout(&y, 2, 0.2, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn holdout_partitions_are_disjoint_and_exhaustive() {
        let y = labels(&[33, 17, 9]);
        let (train, test) = stratified_holdout(&y, 3, 0.2, 5).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
    }

    #[test]
    fn holdout_small_class_rejected() {
        let y = labels(&[30, 4]);
        assert!(matches!(
            stratified_holdout(&y, 2, 0.2, 0).unwrap_err(),
            EvalError::ClassTooSmall { .. }
        ));
    }

    #[test]
    fn kfold_exact_divisibility() {
        let y = labels(&[5, 5]);
        let folds = stratified_kfold(&y, 2, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        for (_, val) in &folds {
            assert_eq!(val.len(), 2);
            let c0 = val.iter().filter(|&&i| y[i] == 0).count();
            assert_eq!(c0, 1);
        }
    }

    #[test]
    fn kfold_class_of_three_over_five_folds() {
        let y = labels(&[7, 3]);
        let folds = stratified_kfold(&y, 2, 5, 9).unwrap();
        let mut total_class1 = 0;
        for (_, val) in &folds {
            let c1 = val.iter().filter(|&&i| y[i] == 1).count();
            assert!(c1 <= 1, "class-1 fold count must be 0 or 1");
            total_class1 += c1;
        }
        assert_eq!(total_class1, 3);
    }

    #[test]
    fn kfold_validation_sets_partition_input() {
        let y = labels(&[13, 8, 6]);
        let folds = stratified_kfold(&y, 3, 5, 2).unwrap();
        let mut seen: Vec<usize> = folds.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..y.len()).collect::<Vec<_>>());
        for (fit, val) in &folds {
            assert!(fit.iter().all(|i| !val.contains(i)));
            assert_eq!(fit.len() + val.len(), y.len());
        }
    }

    #[test]
    fn kfold_stratification_bound_holds_across_seeds() {
        let y = labels(&[23, 11, 7]);
        for seed in 0..30 {
            let folds = stratified_kfold(&y, 3, 5, seed).unwrap();
            for class in 0..3 {
                let n_c = y.iter().filter(|&&c| c == class).count() as f64;
                for (_, val) in &folds {
                    let count = val.iter().filter(|&&i| y[i] == class).count() as f64;
                    assert!(
                        (count - n_c / 5.0).abs() <= 1.0,
                        "seed {seed} class {class}: {count} vs {}",
                        n_c / 5.0
                    );
                }
            }
        }
    }

    #[test]
    fn kfold_empty_class_rejected() {
        let y = labels(&[10, 0]);
        assert!(matches!(
            stratified_kfold(&y, 2, 5, 0).unwrap_err(),
            EvalError::ClassTooSmall { .. }
        ));
    }

    #[test]
    fn grouped_holdout_keeps_subjects_whole() {
        // 12 subjects x 3 visits each.
        let mut y = Vec::new();
        let mut subjects = Vec::new();
        for s in 0..12 {
            for v in 0..3 {
                subjects.push(format!("subj{s}"));
                let _ = v;
                y.push(usize::from(s >= 6));
            }
        }
        let (train, test) = grouped_holdout(&y, &subjects, 2, 0.2, 4).unwrap();
        let train_subjects: std::collections::BTreeSet<&String> =
            train.iter().map(|&i| &subjects[i]).collect();
        let test_subjects: std::collections::BTreeSet<&String> =
            test.iter().map(|&i| &subjects[i]).collect();
        assert!(train_subjects.is_disjoint(&test_subjects));
        assert_eq!(train.len() + test.len(), y.len());
    }

    #[test]
    fn grouped_kfold_keeps_subjects_whole() {
        let mut y = Vec::new();
        let mut subjects = Vec::new();
        for s in 0..15 {
            for _ in 0..2 {
                subjects.push(format!("subj{s}"));
                y.push(usize::from(s % 3 == 0));
            }
        }
        let folds = grouped_kfold(&y, &subjects, 2, 5, 8).unwrap();
        for (fit, val) in &folds {
            let fit_subjects: std::collections::BTreeSet<&String> =
                fit.iter().map(|&i| &subjects[i]).collect();
            let val_subjects: std::collections::BTreeSet<&String> =
                val.iter().map(|&i| &subjects[i]).collect();
            assert!(fit_subjects.is_disjoint(&val_subjects));
        }
    }
}
