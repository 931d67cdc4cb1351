//! Subcommand implementations. Each stage is independently rerunnable: it
//! loads what it needs from the data directory, writes its artifacts into
//! the output directory, and snapshots the resolved configuration.

pub mod embed;
pub mod evaluate;
pub mod explain;
pub mod ingest;
pub mod report;
pub mod synth;

use std::path::Path;

use pdstage_core::data::FeatureMatrix;
use pdstage_core::ingest::IngestReport;

use crate::config::RunConfig;
use crate::error::CliError;

/// Ingest the configured data directory into a labeled matrix.
pub fn load_labeled_matrix(config: &RunConfig) -> Result<(FeatureMatrix, IngestReport), CliError> {
    let schema = config.schema_set()?;
    let (matrix, report) = pdstage_core::ingest::ingest_directory(
        &config.data.dir,
        &schema,
        &config.stage_file(),
    )?;
    Ok((matrix, report))
}

/// Stable float formatting shared by every CSV/TSV artifact (shortest
/// round-trip representation, so reruns are byte-identical).
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
