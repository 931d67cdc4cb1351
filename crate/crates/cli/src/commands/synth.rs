//! `pdstage synth`: generate a schema-compatible synthetic cohort.

use std::path::{Path, PathBuf};

use pdstage_core::synth::{generate_cohort, CohortSpec};

use crate::config::RunConfig;
use crate::error::CliError;

/// Generate the cohort described by `spec_path` (or the default spec when
/// none is given) into `<out_dir>/data`. Returns the dataset directory.
pub fn run(config: &RunConfig, spec_path: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut spec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read cohort spec {}: {e}", path.display()))
            })?;
            CohortSpec::from_toml(&text)?
        }
        None => CohortSpec::default(),
    };
    // The run seed governs unless the spec pins its own.
    if spec_path.is_none() {
        spec.seed = pdstage_core::util::derive_seed(config.seed, "synth");
    }
    let schema = config.schema_set()?;
    let out = config.out_dir.join("data");
    config.write_snapshot(&config.out_dir, "synth")?;
    let manifest = generate_cohort(&spec, &schema, &out)?;
    eprintln!(
        "synth: {} visits ({} subjects) -> {}",
        manifest.total_visits,
        manifest.subjects,
        out.display()
    );
    Ok(out)
}
