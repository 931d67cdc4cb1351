//! `pdstage report`: assemble a human-readable markdown summary from the
//! artifacts already present in the output directory.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::commands::write_text;
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(config: &RunConfig) -> Result<PathBuf, CliError> {
    let out_dir = &config.out_dir;
    let mut md = String::from("# Run report\n\n");
    writeln!(md, "- tool: pdstage {}", env!("CARGO_PKG_VERSION")).expect("write");
    writeln!(md, "- seed: {}", config.seed).expect("write");
    writeln!(md, "- output directory: `{}`", out_dir.display()).expect("write");
    md.push('\n');

    if let Ok(text) = std::fs::read_to_string(out_dir.join("ingest_report.json")) {
        if let Ok(report) = serde_json::from_str::<serde_json::Value>(&text) {
            md.push_str("## Cohort accounting\n\n");
            for (label, key) in [
                ("joined rows", "joined_rows"),
                ("dropped incomplete", "dropped_incomplete"),
                ("excluded sentinel rows", "excluded_sentinel"),
                ("final rows", "final_rows"),
            ] {
                if let Some(v) = report.get(key) {
                    writeln!(md, "- {label}: {v}").expect("write");
                }
            }
            if let Some(counts) = report.get("class_counts").and_then(|v| v.as_object()) {
                let parts: Vec<String> =
                    counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
                writeln!(md, "- class counts: {}", parts.join(", ")).expect("write");
            }
            md.push('\n');
        }
    }

    if let Ok(text) = std::fs::read_to_string(out_dir.join("metrics.json")) {
        if let Ok(doc) = serde_json::from_str::<serde_json::Value>(&text) {
            md.push_str("## Model performance (5-fold mean +- sd, then one-shot holdout)\n\n");
            if let Some(tasks) = doc.get("tasks").and_then(|v| v.as_object()) {
                for (task, section) in tasks {
                    writeln!(md, "### {task}\n").expect("write");
                    md.push_str(
                        "| model | accuracy | f1 | roc_auc | pr_auc | mcc | holdout acc |\n",
                    );
                    md.push_str("|---|---|---|---|---|---|---|\n");
                    if let Some(models) = section.get("models").and_then(|v| v.as_object()) {
                        for (model, entry) in models {
                            let cell = |metric: &str| -> String {
                                let mean = entry
                                    .pointer(&format!("/metrics/{metric}/mean"))
                                    .and_then(|v| v.as_f64())
                                    .unwrap_or(f64::NAN);
                                let sd = entry
                                    .pointer(&format!("/metrics/{metric}/sd"))
                                    .and_then(|v| v.as_f64())
                                    .unwrap_or(f64::NAN);
                                format!("{mean:.4} +- {sd:.4}")
                            };
                            let holdout = entry
                                .pointer("/holdout/accuracy")
                                .and_then(|v| v.as_f64())
                                .unwrap_or(f64::NAN);
                            writeln!(
                                md,
                                "| {model} | {} | {} | {} | {} | {} | {holdout:.4} |",
                                cell("accuracy"),
                                cell("f1"),
                                cell("roc_auc"),
                                cell("pr_auc"),
                                cell("mcc"),
                            )
                            .expect("write");
                        }
                    }
                    md.push('\n');
                }
            }
        }
    } else {
        md.push_str("## Model performance\n\nmetrics.json not found; run `pdstage evaluate` first.\n\n");
    }

    let mut artifacts: Vec<String> = std::fs::read_dir(out_dir)
        .map(|entries| {
            entries
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|name| name != "report.md")
                .collect()
        })
        .unwrap_or_default();
    artifacts.sort();
    if !artifacts.is_empty() {
        md.push_str("## Artifacts\n\n");
        for name in artifacts {
            writeln!(md, "- `{name}`").expect("write");
        }
    }

    let path = out_dir.join("report.md");
    write_text(&path, &md)?;
    Ok(path)
}
