//! `pdstage explain`: Shapley attributions of the boosted-tree model at
//! sample, task, and cross-task level.
//!
//! Only the boosted-tree family is attributed (the linear and neighbor
//! models are benchmarked but not explained). The explained partition is
//! the held-out 20% under the final refit model by default, or the training
//! partition under each row's out-of-fold model with `partition = "oof"`.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use pdstage_core::attribution::{
    cross_task_heatmap, global_class_summary, local_waterfall, tree_shap, GlobalSummary,
};
use pdstage_core::data::VisitKey;
use pdstage_core::evaluate::{evaluate_model, EvalProtocol, Task};
use pdstage_core::ingest::schema::SchemaSet;
use pdstage_core::learners::{Model, ModelKind, TreeEnsemble};
use pdstage_core::preprocess::Standardizer;
use pdstage_core::util::derive_seed;

use crate::commands::{fmt_f64, load_labeled_matrix, write_text};
use crate::config::RunConfig;
use crate::error::CliError;

/// One explained sample: its key, cohort (task-local true class), explained
/// margin group, phi vector, base value, margin, and the local-accuracy
/// audit |base + sum(phi) - margin|.
struct ExplainedSample {
    key: VisitKey,
    cohort: usize,
    group: usize,
    phi: Vec<f64>,
    base_value: f64,
    margin: f64,
    audit: f64,
}

pub fn run(config: &RunConfig) -> Result<PathBuf, CliError> {
    let tasks = config.tasks()?;
    let (matrix, _) = load_labeled_matrix(config)?;
    let schema = config.schema_set()?;
    config.write_snapshot(&config.out_dir, "explain")?;
    let mut binary_summaries: Vec<(Task, GlobalSummary)> = Vec::new();
    let mut out_path = config.out_dir.clone();

    for task in tasks {
        let projected = task.project(&matrix)?;
        let protocol = EvalProtocol {
            holdout_fraction: config.evaluate.holdout_fraction,
            folds: config.evaluate.folds,
            grouped: config.evaluate.grouped_split,
            seed: derive_seed(config.seed, &format!("evaluate:{}", task.name())),
        };
        let grid = config.grid_for(ModelKind::Gbt);
        let evaluated = evaluate_model(&projected, &grid, &protocol)?;

        let samples = match config.explain.partition.as_str() {
            "test" => explain_partition(
                &projected,
                &evaluated.standardizer,
                ensemble_of(&evaluated.final_model)?,
                &evaluated.test_idx,
            )?,
            "oof" => {
                let x_train = projected.x.select_rows(&evaluated.train_idx);
                let mut all = Vec::new();
                for (fold, (fit_idx, val_idx)) in evaluated.fold_plan.iter().enumerate() {
                    let standardizer = Standardizer::fit(
                        &x_train.select_rows(fit_idx),
                        &projected.feature_names,
                        &format!("fold{fold}"),
                    )
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                    let global: Vec<usize> =
                        val_idx.iter().map(|&l| evaluated.train_idx[l]).collect();
                    let ensemble = ensemble_of(&evaluated.fold_models[fold].0)?;
                    all.extend(explain_partition(
                        &projected,
                        &standardizer,
                        ensemble,
                        &global,
                    )?);
                }
                all.sort_by(|a, b| a.key.cmp(&b.key));
                all
            }
            other => {
                return Err(CliError::Config(format!(
                    "explain.partition must be \"test\" or \"oof\", got {other:?}"
                )))
            }
        };

        out_path = write_attributions(config, task, &projected.feature_names, &samples)?;
        let summary = global_class_summary(
            &samples.iter().map(|s| s.phi.clone()).collect::<Vec<_>>(),
            &samples.iter().map(|s| s.cohort).collect::<Vec<_>>(),
            &task
                .class_names()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>(),
            &projected.feature_names,
            config.explain.top_k,
        )?;
        write_summary(config, task, &schema, &summary)?;
        write_waterfalls(config, task, &projected.feature_names, &samples)?;
        if task != Task::ThreeClass {
            binary_summaries.push((task, summary));
        }
    }

    if binary_summaries.len() == 3 {
        let refs: Vec<&GlobalSummary> = binary_summaries.iter().map(|(_, s)| s).collect();
        let names: Vec<String> = binary_summaries
            .iter()
            .map(|(t, _)| t.name().to_string())
            .collect();
        let table = cross_task_heatmap(&refs, &names, config.explain.top_k)?;
        write_heatmap(config, &schema, &table)?;
    } else {
        eprintln!(
            "explain: cross-task table needs the three binary tasks; got {}",
            binary_summaries.len()
        );
    }
    Ok(out_path)
}

fn ensemble_of(model: &Model) -> Result<&TreeEnsemble, CliError> {
    match model {
        Model::Gbt(e) => Ok(e),
        other => Err(CliError::Config(format!(
            "explain requires the boosted-tree model, got {:?}",
            other.kind()
        ))),
    }
}

/// Attribute a set of rows (global projected indices) under one model and
/// its standardizer. Binary tasks explain the positive-class margin;
/// multiclass explains each sample's true class.
fn explain_partition(
    projected: &pdstage_core::evaluate::ProjectedTask,
    standardizer: &Standardizer,
    ensemble: &TreeEnsemble,
    rows: &[usize],
) -> Result<Vec<ExplainedSample>, CliError> {
    let x_raw = projected.x.select_rows(rows);
    let x = standardizer
        .transform(&x_raw)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let samples: Result<Vec<ExplainedSample>, CliError> = (0..rows.len())
        .into_par_iter()
        .map(|local| {
            let global = rows[local];
            let truth = projected.y[global];
            let attrs = tree_shap(ensemble, x.row(local))?;
            let group = if ensemble.n_groups() == 1 { 0 } else { truth };
            let attr = &attrs[group];
            let margin = ensemble.margins(x.row(local))[group];
            let total: f64 = attr.base_value + attr.phi.iter().sum::<f64>();
            Ok(ExplainedSample {
                key: projected.keys[global].clone(),
                cohort: truth,
                group,
                phi: attr.phi.clone(),
                base_value: attr.base_value,
                margin,
                audit: (total - margin).abs(),
            })
        })
        .collect();
    samples
}

fn write_attributions(
    config: &RunConfig,
    task: Task,
    feature_names: &[String],
    samples: &[ExplainedSample],
) -> Result<PathBuf, CliError> {
    let mut out = String::from(
        "PATNO,EVENT_ID,cohort,group,feature,phi,base_value,margin,local_accuracy_error\n",
    );
    for sample in samples {
        for (j, name) in feature_names.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                sample.key.subject_id,
                sample.key.visit_id,
                sample.cohort,
                sample.group,
                name,
                fmt_f64(sample.phi[j]),
                fmt_f64(sample.base_value),
                fmt_f64(sample.margin),
                fmt_f64(sample.audit),
            )
            .expect("string write");
        }
    }
    let path = config
        .out_dir
        .join(format!("attributions_{}.csv", task.name()));
    write_text(&path, &out)?;
    eprintln!(
        "explain: {} attributed {} samples (max audit {})",
        task.name(),
        samples.len(),
        fmt_f64(
            samples
                .iter()
                .map(|s| s.audit)
                .fold(0.0f64, f64::max)
        )
    );
    Ok(path)
}

fn tag_columns(schema: &SchemaSet, feature: &str) -> (String, String, String, String) {
    let instrument = schema
        .instrument_of_feature(feature)
        .map(|m| (m.name.clone(), m.category.clone()))
        .unwrap_or_default();
    let tag = schema.feature_tags.get(feature);
    (
        instrument.0,
        instrument.1,
        tag.map(|t| t.domain.clone()).unwrap_or_default(),
        tag.map(|t| t.nf.clone()).unwrap_or_default(),
    )
}

/// Per-task global summary TSV: every feature sorted by combined mean |phi|
/// descending, with cohort decompositions (absolute, stacked contribution,
/// and signed) and a top-k marker.
fn write_summary(
    config: &RunConfig,
    task: Task,
    schema: &SchemaSet,
    summary: &GlobalSummary,
) -> Result<(), CliError> {
    let max_combined = summary
        .combined_mean_abs
        .iter()
        .fold(0.0f64, |m, v| m.max(*v));
    let mut header =
        String::from("feature\tinstrument\tcategory\tdomain\tnf\tcombined_mean_abs\tshade\ttop_k");
    for cohort in &summary.cohort_names {
        write!(header, "\tmean_abs_{cohort}").expect("string write");
    }
    for cohort in &summary.cohort_names {
        write!(header, "\tcontribution_{cohort}").expect("string write");
    }
    for cohort in &summary.cohort_names {
        write!(header, "\tmean_signed_{cohort}").expect("string write");
    }
    let mut out = header;
    out.push('\n');

    let mut order: Vec<usize> = (0..summary.feature_names.len()).collect();
    order.sort_by(|&a, &b| {
        summary.combined_mean_abs[b]
            .partial_cmp(&summary.combined_mean_abs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| summary.feature_names[a].cmp(&summary.feature_names[b]))
    });
    for j in order {
        let name = &summary.feature_names[j];
        let (instrument, category, domain, nf) = tag_columns(schema, name);
        let shade = if max_combined > 0.0 {
            summary.combined_mean_abs[j] / max_combined
        } else {
            0.0
        };
        write!(
            out,
            "{name}\t{instrument}\t{category}\t{domain}\t{nf}\t{}\t{}\t{}",
            fmt_f64(summary.combined_mean_abs[j]),
            fmt_f64(shade),
            usize::from(summary.top_k.contains(&j)),
        )
        .expect("string write");
        for c in 0..summary.cohort_names.len() {
            write!(out, "\t{}", fmt_f64(summary.cohort_mean_abs[c][j])).expect("string write");
        }
        for c in 0..summary.cohort_names.len() {
            write!(out, "\t{}", fmt_f64(summary.cohort_contribution[c][j])).expect("string write");
        }
        for c in 0..summary.cohort_names.len() {
            write!(out, "\t{}", fmt_f64(summary.cohort_mean_signed[c][j])).expect("string write");
        }
        out.push('\n');
    }
    write_text(
        &config
            .out_dir
            .join(format!("global_summary_{}.tsv", task.name())),
        &out,
    )
}

fn write_heatmap(
    config: &RunConfig,
    schema: &SchemaSet,
    table: &pdstage_core::attribution::HeatmapTable,
) -> Result<(), CliError> {
    let mut out = String::from("feature\tinstrument\tcategory\tdomain\tnf");
    for task in &table.task_names {
        write!(out, "\tvalue_{task}\tshade_{task}").expect("string write");
    }
    out.push('\n');
    for (r, feature) in table.feature_rows.iter().enumerate() {
        let (instrument, category, domain, nf) = tag_columns(schema, feature);
        write!(out, "{feature}\t{instrument}\t{category}\t{domain}\t{nf}").expect("string write");
        for t in 0..table.task_names.len() {
            match (table.cells[r][t], table.shades[r][t]) {
                (Some(v), Some(s)) => {
                    write!(out, "\t{}\t{}", fmt_f64(v), fmt_f64(s)).expect("string write")
                }
                _ => out.push_str("\t\t"),
            }
        }
        out.push('\n');
    }
    write_text(&config.out_dir.join("heatmap.tsv"), &out)?;
    eprintln!("explain: cross-task table has {} rows", table.feature_rows.len());
    Ok(())
}

fn write_waterfalls(
    config: &RunConfig,
    task: Task,
    feature_names: &[String],
    samples: &[ExplainedSample],
) -> Result<(), CliError> {
    let chosen: Vec<&ExplainedSample> = if config.explain.waterfall_samples.is_empty() {
        samples.iter().take(config.explain.waterfall_count).collect()
    } else {
        let mut chosen = Vec::new();
        for spec in &config.explain.waterfall_samples {
            let Some((subject, visit)) = spec.split_once(':') else {
                return Err(CliError::Config(format!(
                    "waterfall sample {spec:?} must be \"subject:visit\""
                )));
            };
            let found = samples
                .iter()
                .find(|s| s.key.subject_id == subject && s.key.visit_id == visit);
            match found {
                Some(s) => chosen.push(s),
                None => {
                    return Err(CliError::Data(format!(
                        "waterfall sample {spec} is not in the explained partition of {}",
                        task.name()
                    )))
                }
            }
        }
        chosen
    };

    for sample in chosen {
        let attr = pdstage_core::attribution::AttributionVector {
            phi: sample.phi.clone(),
            base_value: sample.base_value,
            class_index: sample.group,
        };
        let waterfall = local_waterfall(&attr, feature_names, config.explain.waterfall_top_n)?;
        let mut out = String::new();
        writeln!(
            out,
            "# task={} subject={} visit={} group={} margin={} audit={}",
            task.name(),
            sample.key.subject_id,
            sample.key.visit_id,
            sample.group,
            fmt_f64(sample.margin),
            fmt_f64(sample.audit),
        )
        .expect("string write");
        out.push_str("position,label,phi,running_total\n");
        let mut running = waterfall.base_value;
        writeln!(out, "0,base,{},{}", fmt_f64(running), fmt_f64(running)).expect("string write");
        for (i, entry) in waterfall.entries.iter().enumerate() {
            running += entry.phi;
            writeln!(
                out,
                "{},{},{},{}",
                i + 1,
                entry.label,
                fmt_f64(entry.phi),
                fmt_f64(running)
            )
            .expect("string write");
        }
        let path = config.out_dir.join(format!(
            "waterfall_{}_{}_{}.csv",
            task.name(),
            sample.key.subject_id,
            sample.key.visit_id
        ));
        write_text(&path, &out)?;
    }
    Ok(())
}
