//! `pdstage embed`: 2-D t-SNE projection per task, one plottable CSV each.

use std::fmt::Write as _;
use std::path::PathBuf;

use pdstage_core::embed::{tsne_embed, EmbeddingConfig};
use pdstage_core::preprocess::Standardizer;
use pdstage_core::util::derive_seed;

use crate::commands::{fmt_f64, load_labeled_matrix, write_text};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(config: &RunConfig) -> Result<PathBuf, CliError> {
    let tasks = config.tasks()?;
    let (matrix, _) = load_labeled_matrix(config)?;
    config.write_snapshot(&config.out_dir, "embed")?;
    let mut out_path = config.out_dir.clone();

    for task in tasks {
        let projected = task.project(&matrix)?;
        // The embedding is a whole-cohort visualization; the standardizer
        // fits on everything it plots.
        let standardizer =
            Standardizer::fit(&projected.x, &projected.feature_names, "embed-full")
                .map_err(|e| CliError::Numerical(e.to_string()))?;
        let x = standardizer
            .transform(&projected.x)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let seed = derive_seed(config.seed, &format!("embed:{}", task.name()));

        // Deterministic stratified cap for very large cohorts.
        let rows: Vec<usize> = if config.embed.max_rows > 0 && x.n_rows() > config.embed.max_rows {
            let fraction = config.embed.max_rows as f64 / x.n_rows() as f64;
            let (_, kept) = pdstage_core::evaluate::stratified_holdout(
                &projected.y,
                task.n_classes(),
                fraction,
                seed,
            )?;
            kept
        } else {
            (0..x.n_rows()).collect()
        };
        let x_used = x.select_rows(&rows);

        let embedding_config = EmbeddingConfig {
            perplexity: config.embed.perplexity,
            iterations: config.embed.iterations,
            learning_rate: config.embed.learning_rate,
            exaggeration: config.embed.exaggeration,
            exaggeration_iters: config.embed.exaggeration_iters,
            seed,
        };
        let embedding = tsne_embed(&x_used, &embedding_config)?;

        let mut out = String::new();
        writeln!(
            out,
            "# tool=pdstage version={} task={}",
            env!("CARGO_PKG_VERSION"),
            task.name()
        )
        .expect("string write");
        writeln!(
            out,
            "# perplexity={} iterations={} learning_rate={} exaggeration={} exaggeration_iters={} seed={}",
            fmt_f64(embedding_config.perplexity),
            embedding_config.iterations,
            fmt_f64(embedding_config.learning_rate),
            fmt_f64(embedding_config.exaggeration),
            embedding_config.exaggeration_iters,
            embedding_config.seed,
        )
        .expect("string write");
        writeln!(
            out,
            "# init=seeded-gaussian-1e-4 rows={} final_kl={}",
            rows.len(),
            fmt_f64(*embedding.kl_trace.last().unwrap_or(&f64::NAN)),
        )
        .expect("string write");
        out.push_str("PATNO,EVENT_ID,x,y,label\n");
        let class_names = task.class_names();
        for (local, &global) in rows.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                projected.keys[global].subject_id,
                projected.keys[global].visit_id,
                fmt_f64(embedding.coords[local][0]),
                fmt_f64(embedding.coords[local][1]),
                class_names[projected.y[global]],
            )
            .expect("string write");
        }
        out_path = config
            .out_dir
            .join(format!("embedding_{}.csv", task.name()));
        write_text(&out_path, &out)?;
        eprintln!(
            "embed: {} embedded {} rows (final KL {})",
            task.name(),
            rows.len(),
            fmt_f64(*embedding.kl_trace.last().unwrap_or(&f64::NAN))
        );
    }
    Ok(out_path)
}
