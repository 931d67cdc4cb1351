use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdstage_cli::{commands, init_workers, CliError, RunConfig};

/// Visit-level Parkinson's severity staging pipeline: synthesize or ingest
/// assessment tables, benchmark classifiers, explain predictions, and embed
/// cohorts.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numerical error.
#[derive(Parser)]
#[command(name = "pdstage", version, about)]
struct Cli {
    /// Run configuration TOML; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed; all stage randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts and the config snapshot.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Data directory holding instrument CSVs and stages.csv.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Restrict to one task (healthy_vs_mild, healthy_vs_modsevere,
    /// mild_vs_modsevere, three_class).
    #[arg(long, global = true)]
    task: Option<String>,
    /// Restrict to one model (gbt, logistic, forest, knn).
    #[arg(long, global = true)]
    model: Option<String>,
    /// Worker threads for parallel stages (0 = library default).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Keep all visits of a subject in one partition when splitting.
    #[arg(long, global = true)]
    grouped_split: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (instrument CSVs + stage table + manifest).
    Synth {
        /// Cohort spec TOML; omitted = the default skewed cohort.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Build the labeled feature matrix and accounting report.
    Ingest,
    /// Benchmark the configured models over the configured tasks.
    Evaluate,
    /// Shapley attributions: per-sample CSVs, global summaries, the
    /// cross-task table, and waterfalls.
    Explain,
    /// 2-D t-SNE projection per task.
    Embed,
    /// Assemble report.md from the artifacts in the output directory.
    Report,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(data) = &cli.data {
        config.data.dir = data.clone();
    }
    if let Some(task) = &cli.task {
        config.evaluate.tasks = vec![task.clone()];
    }
    if let Some(model) = &cli.model {
        config.evaluate.models = vec![model.clone()];
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if cli.grouped_split {
        config.evaluate.grouped_split = true;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = resolve_config(cli)?;
    init_workers(config.workers);
    match &cli.command {
        Command::Synth { spec } => {
            commands::synth::run(&config, spec.as_deref())?;
        }
        Command::Ingest => {
            commands::ingest::run(&config)?;
        }
        Command::Evaluate => {
            commands::evaluate::run(&config)?;
        }
        Command::Explain => {
            commands::explain::run(&config)?;
        }
        Command::Embed => {
            commands::embed::run(&config)?;
        }
        Command::Report => {
            let path = commands::report::run(&config)?;
            eprintln!("report: {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pdstage: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
