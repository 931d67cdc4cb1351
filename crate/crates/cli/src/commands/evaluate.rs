//! `pdstage evaluate`: the full benchmarking protocol for every configured
//! (task, model) pair.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use pdstage_core::evaluate::{evaluate_model, EvalProtocol, ModelEvaluation, Task};
use pdstage_core::util::derive_seed;

use crate::commands::{fmt_f64, load_labeled_matrix, write_text};
use crate::config::RunConfig;
use crate::error::CliError;

/// Run evaluation and write `metrics.json` (per task, per model, per metric:
/// mean, sd, per-fold values, plus one-shot holdout numbers), per-pair
/// confusion CSVs, model exports, standardizer sidecars, and per-task
/// split-assignment exports. Returns the metrics path.
pub fn run(config: &RunConfig) -> Result<PathBuf, CliError> {
    let tasks = config.tasks()?;
    let models = config.models()?;
    let (matrix, _) = load_labeled_matrix(config)?;
    config.write_snapshot(&config.out_dir, "evaluate")?;

    let mut task_sections = serde_json::Map::new();
    for task in tasks {
        let projected = task.project(&matrix)?;
        let protocol = EvalProtocol {
            holdout_fraction: config.evaluate.holdout_fraction,
            folds: config.evaluate.folds,
            grouped: config.evaluate.grouped_split,
            seed: derive_seed(config.seed, &format!("evaluate:{}", task.name())),
        };
        let mut model_sections = serde_json::Map::new();
        let mut splits_written = false;
        for &model in &models {
            let grid = config.grid_for(model);
            let evaluated = evaluate_model(&projected, &grid, &protocol)?;

            write_confusion(
                config,
                &format!("confusion_{}_{}_oof.csv", task.name(), model.name()),
                &task,
                &evaluated.report.oof_confusion,
            )?;
            write_confusion(
                config,
                &format!("confusion_{}_{}_holdout.csv", task.name(), model.name()),
                &task,
                &evaluated.report.holdout_confusion,
            )?;
            write_text(
                &config
                    .out_dir
                    .join(format!("model_{}_{}.json", task.name(), model.name())),
                &evaluated.final_model.export_json(),
            )?;
            write_text(
                &config
                    .out_dir
                    .join(format!("standardizer_{}_{}.json", task.name(), model.name())),
                &evaluated.standardizer.to_json(),
            )?;
            if !splits_written {
                write_splits(config, &task, &projected.keys, &evaluated)?;
                splits_written = true;
            }
            eprintln!(
                "evaluate: {} / {}: cv acc {:.4} +- {:.4}, holdout acc {:.4}",
                task.name(),
                model.name(),
                evaluated.report.cv.mean.accuracy,
                evaluated.report.cv.sd.accuracy,
                evaluated.report.holdout.accuracy
            );
            model_sections.insert(
                model.name().to_string(),
                model_section(&evaluated.report),
            );
        }
        task_sections.insert(
            task.name().to_string(),
            serde_json::json!({
                "class_names": task.class_names(),
                "rows": projected.x.n_rows(),
                "models": model_sections,
            }),
        );
    }

    let doc = serde_json::json!({
        "seed": config.seed,
        "holdout_fraction": config.evaluate.holdout_fraction,
        "folds": config.evaluate.folds,
        "grouped_split": config.evaluate.grouped_split,
        "tasks": task_sections,
    });
    let metrics_path = config.out_dir.join("metrics.json");
    write_text(
        &metrics_path,
        &serde_json::to_string_pretty(&doc).expect("metrics serialize"),
    )?;
    Ok(metrics_path)
}

/// Metric-keyed layout: "metrics" maps each metric name to its fold mean,
/// fold sd, and per-fold values; "holdout" carries the one-shot numbers.
fn model_section(report: &ModelEvaluation) -> serde_json::Value {
    let mut metrics = serde_json::Map::new();
    for (name, (mean, sd, per_fold)) in report.cv.by_metric() {
        metrics.insert(
            name.to_string(),
            serde_json::json!({
                "mean": mean,
                "sd": sd,
                "per_fold": per_fold,
            }),
        );
    }
    let holdout: BTreeMap<&'static str, f64> = report.holdout.as_pairs().into_iter().collect();
    serde_json::json!({
        "best_params": report.best_params,
        "metrics": metrics,
        "holdout": holdout,
        "oof_confusion": report.oof_confusion,
        "holdout_confusion": report.holdout_confusion,
        "grid": report.grid_scores,
        "train_rows": report.train_rows,
        "test_rows": report.test_rows,
    })
}

fn write_confusion(
    config: &RunConfig,
    file: &str,
    task: &Task,
    confusion: &[Vec<f64>],
) -> Result<(), CliError> {
    let names = task.class_names();
    let mut out = String::from("true_class");
    for name in &names {
        write!(out, ",pred_{name}").expect("string write");
    }
    out.push('\n');
    for (i, row) in confusion.iter().enumerate() {
        out.push_str(names[i]);
        for v in row {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    write_text(&config.out_dir.join(file), &out)
}

/// Export the partition assignment for audit: train rows carry the fold
/// that validates them out-of-fold, test rows the holdout marker.
fn write_splits(
    config: &RunConfig,
    task: &Task,
    keys: &[pdstage_core::data::VisitKey],
    evaluated: &pdstage_core::evaluate::EvaluatedModel,
) -> Result<(), CliError> {
    let mut rows: Vec<(usize, String)> = Vec::with_capacity(keys.len());
    for (fold, (_, val_idx)) in evaluated.fold_plan.iter().enumerate() {
        for &local in val_idx {
            rows.push((evaluated.train_idx[local], format!("train,{fold}")));
        }
    }
    for &i in &evaluated.test_idx {
        rows.push((i, "test,".to_string()));
    }
    rows.sort();
    let mut out = String::from("PATNO,EVENT_ID,partition,fold\n");
    for (i, suffix) in rows {
        writeln!(
            out,
            "{},{},{}",
            keys[i].subject_id, keys[i].visit_id, suffix
        )
        .expect("string write");
    }
    write_text(
        &config.out_dir.join(format!("splits_{}.csv", task.name())),
        &out,
    )
}
