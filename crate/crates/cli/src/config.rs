//! Run configuration: one TOML file plus flag overrides, snapshotted into
//! every output directory so results are reproducible from the snapshot
//! alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pdstage_core::evaluate::{GridSpec, ParamValue, Task};
use pdstage_core::learners::ModelKind;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Top-level seed; every stage derives its own stream from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Rayon worker threads; 0 keeps the library default.
    pub workers: usize,
    pub data: DataConfig,
    pub evaluate: EvaluateConfig,
    /// Per-model hyperparameter grids; models without an entry use the
    /// documented defaults.
    pub grids: BTreeMap<String, BTreeMap<String, Vec<ParamValue>>>,
    pub explain: ExplainConfig,
    pub embed: EmbedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("run_out"),
            workers: 0,
            data: DataConfig::default(),
            evaluate: EvaluateConfig::default(),
            grids: BTreeMap::new(),
            explain: ExplainConfig::default(),
            embed: EmbedConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory holding one CSV per instrument plus the stage table.
    pub dir: PathBuf,
    /// Stage CSV; empty means `<dir>/stages.csv`.
    pub stage_file: PathBuf,
    /// Instrument schema TOML; empty means the built-in schema.
    pub schema: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            stage_file: PathBuf::new(),
            schema: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub tasks: Vec<String>,
    pub models: Vec<String>,
    pub holdout_fraction: f64,
    pub folds: usize,
    /// Keep all visits of a subject in one partition (stricter protocol).
    pub grouped_split: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            tasks: Task::all().iter().map(|t| t.name().to_string()).collect(),
            models: ModelKind::all().iter().map(|m| m.name().to_string()).collect(),
            holdout_fraction: 0.2,
            folds: 5,
            grouped_split: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    /// Which rows get attributed: "test" (final model on the held-out 20%)
    /// or "oof" (each training row by its out-of-fold model).
    pub partition: String,
    pub top_k: usize,
    pub waterfall_top_n: usize,
    /// Explicit "subject:visit" keys; empty falls back to the first
    /// `waterfall_count` rows of the explained partition.
    pub waterfall_samples: Vec<String>,
    pub waterfall_count: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            partition: "test".into(),
            top_k: 15,
            waterfall_top_n: 10,
            waterfall_samples: Vec::new(),
            waterfall_count: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Deterministic stratified row cap for the O(N^2) embedding; 0 = no cap.
    pub max_rows: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            max_rows: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn tasks(&self) -> Result<Vec<Task>, CliError> {
        self.evaluate
            .tasks
            .iter()
            .map(|name| {
                Task::parse(name)
                    .ok_or_else(|| CliError::Config(format!("unknown task {name:?}")))
            })
            .collect()
    }

    pub fn models(&self) -> Result<Vec<ModelKind>, CliError> {
        self.evaluate
            .models
            .iter()
            .map(|name| {
                ModelKind::parse(name)
                    .ok_or_else(|| CliError::Config(format!("unknown model {name:?}")))
            })
            .collect()
    }

    /// Grid for one model: the config override when present, otherwise the
    /// documented default.
    pub fn grid_for(&self, model: ModelKind) -> GridSpec {
        match self.grids.get(model.name()) {
            Some(params) => GridSpec {
                model,
                params: params
                    .iter()
                    .map(|(name, values)| (name.clone(), values.clone()))
                    .collect(),
            },
            None => GridSpec::default_for(model),
        }
    }

    pub fn stage_file(&self) -> PathBuf {
        if self.data.stage_file.as_os_str().is_empty() {
            self.data.dir.join("stages.csv")
        } else {
            self.data.stage_file.clone()
        }
    }

    pub fn schema_set(&self) -> Result<pdstage_core::ingest::schema::SchemaSet, CliError> {
        if self.data.schema.as_os_str().is_empty() {
            Ok(pdstage_core::ingest::schema::SchemaSet::builtin())
        } else {
            let text = std::fs::read_to_string(&self.data.schema).map_err(|e| {
                CliError::Config(format!(
                    "cannot read schema {}: {e}",
                    self.data.schema.display()
                ))
            })?;
            pdstage_core::ingest::schema::SchemaSet::from_toml(&text)
                .map_err(|e| CliError::Config(e.to_string()))
        }
    }

    /// Write the resolved snapshot and tool version into the output
    /// directory. Re-running with `--config <out>/config_resolved.toml`
    /// reproduces the run.
    pub fn write_snapshot(&self, out_dir: &Path, command: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
        let toml_text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        std::fs::write(out_dir.join("config_resolved.toml"), toml_text)
            .map_err(|e| CliError::Data(format!("cannot write snapshot: {e}")))?;
        let meta = serde_json::json!({
            "tool": "pdstage",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.seed,
        });
        std::fs::write(
            out_dir.join("run_meta.json"),
            serde_json::to_string_pretty(&meta).expect("meta serializes"),
        )
        .map_err(|e| CliError::Data(format!("cannot write run_meta: {e}")))?;
        Ok(())
    }
}
