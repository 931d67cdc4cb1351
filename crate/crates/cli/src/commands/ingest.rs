//! `pdstage ingest`: build the labeled visit-level feature matrix and its
//! accounting report.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::commands::{fmt_f64, load_labeled_matrix, write_text};
use crate::config::RunConfig;
use crate::error::CliError;

/// Write `features.csv` (subject, visit, raw stage, label, then the 208
/// feature columns) and `ingest_report.json` carrying cohort accounting and
/// the artifact digest. Returns the features path.
pub fn run(config: &RunConfig) -> Result<PathBuf, CliError> {
    let (matrix, report) = load_labeled_matrix(config)?;
    config.write_snapshot(&config.out_dir, "ingest")?;

    let mut csv = String::new();
    csv.push_str("PATNO,EVENT_ID,RAW_STAGE,LABEL");
    for name in &matrix.feature_order {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for row in &matrix.rows {
        let label = row.label.expect("assign_severity labeled every row");
        write!(
            csv,
            "{},{},{},{}",
            row.key.subject_id,
            row.key.visit_id,
            label.raw_stage,
            label.consolidated.name()
        )
        .expect("string write");
        for value in &row.values {
            csv.push(',');
            csv.push_str(&fmt_f64(value.expect("drop_incomplete removed missing values")));
        }
        csv.push('\n');
    }
    let features_path = config.out_dir.join("features.csv");
    write_text(&features_path, &csv)?;

    let digest = pdstage_core::util::sha256_hex(csv.as_bytes());
    let mut doc = serde_json::to_value(&report).expect("report serializes");
    doc.as_object_mut()
        .expect("object")
        .insert("features_csv_sha256".into(), serde_json::Value::String(digest));
    write_text(
        &config.out_dir.join("ingest_report.json"),
        &serde_json::to_string_pretty(&doc).expect("report serializes"),
    )?;

    eprintln!(
        "ingest: {} rows x {} features -> {}",
        matrix.n_rows(),
        matrix.n_features(),
        features_path.display()
    );
    Ok(features_path)
}
