//! Assessment-table ingest: load instrument CSVs, derive features, join
//! instruments on (subject, visit), drop incomplete rows, and attach
//! severity labels.

pub mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, SeverityClass, SeverityLabel, VisitKey, VisitRow};
use crate::error::IngestError;
use schema::{DerivationRule, InstrumentSchema, SchemaSet};

/// Raw per-visit item values of one instrument, as loaded from its CSV.
/// Missing and unparseable cells are carried as `None`, never zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct RawItemTable {
    pub instrument: String,
    pub item_names: Vec<String>,
    /// External score columns referenced by the schema, loaded alongside items.
    pub score_names: Vec<String>,
    pub rows: Vec<RawItemRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawItemRow {
    pub key: VisitKey,
    pub item_values: Vec<Option<f64>>,
    pub score_values: Vec<Option<f64>>,
}

/// Derived feature values of one instrument, keyed by visit.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub instrument: String,
    pub feature_names: Vec<String>,
    pub rows: BTreeMap<VisitKey, Vec<Option<f64>>>,
}

/// Load one instrument CSV. The header must contain the subject and visit
/// columns plus every item column (and external score column) the schema
/// declares; extra columns are ignored.
pub fn load_instrument_table(
    path: &Path,
    schema: &InstrumentSchema,
    subject_column: &str,
    visit_column: &str,
) -> Result<RawItemTable, IngestError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: path_str.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => IngestError::Csv {
                path: path_str.clone(),
                source: e,
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .clone();
    let column_index: BTreeMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, name)| (name, i))
        .collect();

    let locate = |column: &str| -> Result<usize, IngestError> {
        column_index.get(column).copied().ok_or_else(|| {
            IngestError::Schema(crate::error::SchemaError::MissingColumn {
                instrument: schema.name.clone(),
                column: column.to_string(),
                path: path_str.clone(),
            })
        })
    };

    let subject_idx = locate(subject_column)?;
    let visit_idx = locate(visit_column)?;
    let item_indices: Vec<usize> = schema
        .items
        .iter()
        .map(|item| locate(item))
        .collect::<Result<_, _>>()?;
    let score_names: Vec<String> = schema
        .features
        .iter()
        .filter_map(|f| match &f.rule {
            DerivationRule::ExternalScore { column } => Some(column.clone()),
            _ => None,
        })
        .collect();
    let score_indices: Vec<usize> = score_names
        .iter()
        .map(|c| locate(c))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        let key = VisitKey::new(
            record.get(subject_idx).unwrap_or("").trim(),
            record.get(visit_idx).unwrap_or("").trim(),
        );
        let parse_cell = |idx: usize| -> Option<f64> {
            let cell = record.get(idx).unwrap_or("").trim();
            if cell.is_empty() {
                return None;
            }
            cell.parse::<f64>().ok().filter(|v| v.is_finite())
        };
        rows.push(RawItemRow {
            key,
            item_values: item_indices.iter().map(|&i| parse_cell(i)).collect(),
            score_values: score_indices.iter().map(|&i| parse_cell(i)).collect(),
        });
    }

    Ok(RawItemTable {
        instrument: schema.name.clone(),
        item_names: schema.items.clone(),
        score_names,
        rows,
    })
}

/// Apply the schema's derivation rules to a raw table. Sum rules with any
/// missing constituent, and passthroughs of missing items, yield missing
/// features; exclusions never surface. Duplicate (subject, visit) keys are
/// rejected so the joined matrix stays unique per visit.
pub fn derive_instrument_features(
    table: &RawItemTable,
    schema: &InstrumentSchema,
) -> Result<FeatureBlock, IngestError> {
    let item_idx: BTreeMap<&str, usize> = table
        .item_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let score_idx: BTreeMap<&str, usize> = table
        .score_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let mut rows: BTreeMap<VisitKey, Vec<Option<f64>>> = BTreeMap::new();
    for raw in &table.rows {
        let mut values = Vec::with_capacity(schema.features.len());
        for feature in &schema.features {
            let value = match &feature.rule {
                DerivationRule::Passthrough { item } => raw.item_values[item_idx[item.as_str()]],
                DerivationRule::Sum { items } => {
                    let mut total = 0.0;
                    let mut complete = true;
                    for item in items {
                        match raw.item_values[item_idx[item.as_str()]] {
                            Some(v) => total += v,
                            None => {
                                complete = false;
                                break;
                            }
                        }
                    }
                    complete.then_some(total)
                }
                DerivationRule::ExternalScore { column } => {
                    raw.score_values[score_idx[column.as_str()]]
                }
            };
            values.push(value);
        }
        if rows.insert(raw.key.clone(), values).is_some() {
            return Err(IngestError::DuplicateVisit {
                instrument: schema.name.clone(),
                subject: raw.key.subject_id.clone(),
                visit: raw.key.visit_id.clone(),
            });
        }
    }

    Ok(FeatureBlock {
        instrument: schema.name.clone(),
        feature_names: schema.feature_names().map(str::to_string).collect(),
        rows,
    })
}

/// Inner-join feature blocks on (subject, visit). Only visits present in
/// every block survive; columns concatenate in block order. Rows come out
/// sorted by key, which makes the join independent of block ordering.
pub fn join_common_visits(blocks: &[FeatureBlock]) -> Result<FeatureMatrix, IngestError> {
    if blocks.is_empty() {
        return Err(IngestError::EmptyJoin);
    }
    let mut common: BTreeSet<VisitKey> = blocks[0].rows.keys().cloned().collect();
    for block in &blocks[1..] {
        common.retain(|k| block.rows.contains_key(k));
    }
    if common.is_empty() {
        return Err(IngestError::EmptyJoin);
    }

    let feature_order: Vec<String> = blocks
        .iter()
        .flat_map(|b| b.feature_names.iter().cloned())
        .collect();
    let width: usize = feature_order.len();

    let rows = common
        .into_iter()
        .map(|key| {
            let mut values = Vec::with_capacity(width);
            for block in blocks {
                values.extend_from_slice(&block.rows[&key]);
            }
            VisitRow {
                key,
                values,
                label: None,
            }
        })
        .collect();

    Ok(FeatureMatrix {
        feature_order,
        rows,
    })
}

/// Remove rows with any missing feature. Returns the cleaned matrix and the
/// number of rows removed. Idempotent.
pub fn drop_incomplete(matrix: FeatureMatrix) -> (FeatureMatrix, usize) {
    let before = matrix.rows.len();
    let rows: Vec<VisitRow> = matrix
        .rows
        .into_iter()
        .filter(|r| r.values.iter().all(Option::is_some))
        .collect();
    let dropped = before - rows.len();
    (
        FeatureMatrix {
            feature_order: matrix.feature_order,
            rows,
        },
        dropped,
    )
}

/// Attach severity labels from a stage table keyed by visit. Rows whose
/// consolidated class is Excluded (stage code 101) are removed and counted.
/// Every retained visit must have a stage entry.
pub fn assign_severity(
    matrix: FeatureMatrix,
    stage_table: &BTreeMap<VisitKey, i64>,
) -> Result<(FeatureMatrix, usize), IngestError> {
    let missing: Vec<&VisitKey> = matrix
        .rows
        .iter()
        .map(|r| &r.key)
        .filter(|k| !stage_table.contains_key(*k))
        .collect();
    if let Some(first) = missing.first() {
        return Err(IngestError::MissingStage {
            count: missing.len(),
            subject: first.subject_id.clone(),
            visit: first.visit_id.clone(),
        });
    }

    let mut excluded = 0usize;
    let mut rows = Vec::with_capacity(matrix.rows.len());
    for mut row in matrix.rows {
        let code = stage_table[&row.key];
        let label = SeverityLabel::from_raw(code).ok_or_else(|| IngestError::UnknownStageCode {
            code,
            subject: row.key.subject_id.clone(),
            visit: row.key.visit_id.clone(),
        })?;
        if label.consolidated == SeverityClass::Excluded {
            excluded += 1;
            continue;
        }
        row.label = Some(label);
        rows.push(row);
    }

    Ok((
        FeatureMatrix {
            feature_order: matrix.feature_order,
            rows,
        },
        excluded,
    ))
}

/// Load the stage CSV: subject, visit, cohort arm, and H&Y stage columns.
/// Healthy-arm visits are coded with the healthy marker regardless of their
/// stage cell; PD-arm visits must carry a parseable stage code.
pub fn load_stage_table(
    path: &Path,
    subject_column: &str,
    visit_column: &str,
) -> Result<BTreeMap<VisitKey, i64>, IngestError> {
    let path_str = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| IngestError::Io {
        path: path_str.clone(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .clone();
    let find = |name: &str| -> Result<usize, IngestError> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            IngestError::StageTable {
                row: 0,
                message: format!("missing column {name}"),
            }
        })
    };
    let subject_idx = find(subject_column)?;
    let visit_idx = find(visit_column)?;
    let cohort_idx = find("COHORT")?;
    let stage_idx = find("NHY")?;

    let mut table = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        let key = VisitKey::new(
            record.get(subject_idx).unwrap_or("").trim(),
            record.get(visit_idx).unwrap_or("").trim(),
        );
        let cohort = record.get(cohort_idx).unwrap_or("").trim();
        let code = if cohort.eq_ignore_ascii_case("HC") {
            crate::data::HEALTHY_MARKER
        } else {
            let cell = record.get(stage_idx).unwrap_or("").trim();
            cell.parse::<i64>().map_err(|_| IngestError::StageTable {
                row: i + 1,
                message: format!("unparseable stage {cell:?} for ({key})"),
            })?
        };
        table.insert(key, code);
    }
    Ok(table)
}

/// Accounting emitted by a full ingest run, mirroring the cohort bookkeeping
/// a study report would carry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IngestReport {
    pub per_instrument_rows: BTreeMap<String, usize>,
    pub joined_rows: usize,
    pub dropped_incomplete: usize,
    pub excluded_sentinel: usize,
    pub final_rows: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub stage_histogram: BTreeMap<i64, usize>,
}

/// Run the full ingest: load every instrument, derive, join, clean, label.
pub fn ingest_directory(
    dir: &Path,
    schema: &SchemaSet,
    stage_file: &Path,
) -> Result<(FeatureMatrix, IngestReport), IngestError> {
    let mut blocks = Vec::with_capacity(schema.instruments.len());
    let mut per_instrument_rows = BTreeMap::new();
    for inst in &schema.instruments {
        let table = load_instrument_table(
            &dir.join(&inst.file),
            inst,
            &schema.subject_column,
            &schema.visit_column,
        )?;
        per_instrument_rows.insert(inst.name.clone(), table.rows.len());
        blocks.push(derive_instrument_features(&table, inst)?);
    }
    let joined = join_common_visits(&blocks)?;
    let joined_rows = joined.n_rows();
    let (clean, dropped_incomplete) = drop_incomplete(joined);
    let stage_table = load_stage_table(stage_file, &schema.subject_column, &schema.visit_column)?;
    let mut stage_histogram: BTreeMap<i64, usize> = BTreeMap::new();
    for row in &clean.rows {
        if let Some(code) = stage_table.get(&row.key) {
            *stage_histogram.entry(*code).or_insert(0) += 1;
        }
    }
    let (labeled, excluded_sentinel) = assign_severity(clean, &stage_table)?;
    let class_counts = labeled
        .class_counts()
        .into_iter()
        .map(|(k, v)| (k.name().to_string(), v))
        .collect();
    let report = IngestReport {
        per_instrument_rows,
        joined_rows,
        dropped_incomplete,
        excluded_sentinel,
        final_rows: labeled.n_rows(),
        class_counts,
        stage_histogram,
    };
    Ok((labeled, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn epw_schema() -> (SchemaSet, InstrumentSchema) {
        let set = SchemaSet::builtin();
        let inst = set.instrument("epworth").unwrap().clone();
        (set, inst)
    }

    fn write_csv(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_three_visits_eight_items() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "epworth.csv",
            "PATNO,EVENT_ID,ESS1,ESS2,ESS3,ESS4,ESS5,ESS6,ESS7,ESS8\n\
             3001,BL,0,1,2,3,0,1,2,3\n\
             3001,V04,1,1,1,1,1,1,1,1\n\
             3002,BL,2,2,2,2,2,2,2,2\n",
        );
        let (set, inst) = epw_schema();
        let table =
            load_instrument_table(&path, &inst, &set.subject_column, &set.visit_column).unwrap();
        assert_eq!(table.rows.len(), 3);
        for row in &table.rows {
            assert_eq!(row.item_values.len(), 8);
            assert!(row.item_values.iter().all(Option::is_some));
        }
    }

    #[test]
    fn missing_visit_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "epworth.csv",
            "PATNO,ESS1,ESS2,ESS3,ESS4,ESS5,ESS6,ESS7,ESS8\n3001,0,1,2,3,0,1,2,3\n",
        );
        let (set, inst) = epw_schema();
        let err = load_instrument_table(&path, &inst, &set.subject_column, &set.visit_column)
            .unwrap_err();
        match err {
            IngestError::Schema(crate::error::SchemaError::MissingColumn { column, .. }) => {
                assert_eq!(column, "EVENT_ID");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn blank_and_unparseable_cells_become_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "epworth.csv",
            "PATNO,EVENT_ID,ESS1,ESS2,ESS3,ESS4,ESS5,ESS6,ESS7,ESS8\n\
             3001,BL,0,,2,3,0,1,2,3\n\
             3002,BL,0,1,2,3,0,1,2,x\n",
        );
        let (set, inst) = epw_schema();
        let table =
            load_instrument_table(&path, &inst, &set.subject_column, &set.visit_column).unwrap();
        // Hand-built expected table: row 0 misses item 1, row 1 misses item 7.
        let expected_row0: Vec<Option<f64>> = vec![
            Some(0.0),
            None,
            Some(2.0),
            Some(3.0),
            Some(0.0),
            Some(1.0),
            Some(2.0),
            Some(3.0),
        ];
        assert_eq!(table.rows[0].item_values, expected_row0);
        assert_eq!(table.rows[1].item_values[7], None);
        assert!(table.rows[1].item_values[..7].iter().all(Option::is_some));
    }

    #[test]
    fn epw_all_zero_visit_derives_nine_zero_features() {
        let table = RawItemTable {
            instrument: "epworth".into(),
            item_names: (1..=8).map(|i| format!("ESS{i}")).collect(),
            score_names: vec![],
            rows: vec![RawItemRow {
                key: VisitKey::new("3001", "BL"),
                item_values: vec![Some(0.0); 8],
                score_values: vec![],
            }],
        };
        let (_, inst) = epw_schema();
        let block = derive_instrument_features(&table, &inst).unwrap();
        let values = &block.rows[&VisitKey::new("3001", "BL")];
        assert_eq!(values.len(), 9);
        assert!(values.iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn rem_drops_parkism_column() {
        let set = SchemaSet::builtin();
        let inst = set.instrument("rem").unwrap().clone();
        assert_eq!(inst.items.len(), 21);
        let table = RawItemTable {
            instrument: "rem".into(),
            item_names: inst.items.clone(),
            score_names: vec![],
            rows: vec![RawItemRow {
                key: VisitKey::new("3001", "BL"),
                item_values: vec![Some(1.0); 21],
                score_values: vec![],
            }],
        };
        let block = derive_instrument_features(&table, &inst).unwrap();
        assert_eq!(block.feature_names.len(), 20);
        assert!(!block.feature_names.contains(&"PARKISM".to_string()));
    }

    #[test]
    fn stai_adds_state_and_trait_sums() {
        let set = SchemaSet::builtin();
        let inst = set.instrument("stai").unwrap().clone();
        let values: Vec<Option<f64>> = (1..=40).map(|i| Some(i as f64)).collect();
        let table = RawItemTable {
            instrument: "stai".into(),
            item_names: inst.items.clone(),
            score_names: vec![],
            rows: vec![RawItemRow {
                key: VisitKey::new("3001", "BL"),
                item_values: values.clone(),
                score_values: vec![],
            }],
        };
        let block = derive_instrument_features(&table, &inst).unwrap();
        assert_eq!(block.feature_names.len(), 42);
        let row = &block.rows[&VisitKey::new("3001", "BL")];
        // Independent summation oracle over the raw items.
        let state_oracle: f64 = (1..=20).map(|i| i as f64).sum();
        let trait_oracle: f64 = (21..=40).map(|i| i as f64).sum();
        let state_idx = block
            .feature_names
            .iter()
            .position(|n| n == "STAI_STATE_TOTAL")
            .unwrap();
        let trait_idx = block
            .feature_names
            .iter()
            .position(|n| n == "STAI_TRAIT_TOTAL")
            .unwrap();
        assert_eq!(row[state_idx], Some(state_oracle));
        assert_eq!(row[trait_idx], Some(trait_oracle));
    }

    #[test]
    fn sum_rule_with_missing_item_is_missing() {
        let (_, inst) = epw_schema();
        let mut values: Vec<Option<f64>> = vec![Some(1.0); 8];
        values[3] = None;
        let table = RawItemTable {
            instrument: "epworth".into(),
            item_names: inst.items.clone(),
            score_names: vec![],
            rows: vec![RawItemRow {
                key: VisitKey::new("3001", "BL"),
                item_values: values,
                score_values: vec![],
            }],
        };
        let block = derive_instrument_features(&table, &inst).unwrap();
        let row = &block.rows[&VisitKey::new("3001", "BL")];
        let total_idx = block
            .feature_names
            .iter()
            .position(|n| n == "ESS_TOTAL")
            .unwrap();
        assert_eq!(row[total_idx], None);
        assert_eq!(row[3], None);
        assert_eq!(row[0], Some(1.0));
    }

    fn block(name: &str, keys: &[(&str, &str)], width: usize, fill: f64) -> FeatureBlock {
        FeatureBlock {
            instrument: name.into(),
            feature_names: (0..width).map(|i| format!("{name}_{i}")).collect(),
            rows: keys
                .iter()
                .map(|(s, v)| (VisitKey::new(*s, *v), vec![Some(fill); width]))
                .collect(),
        }
    }

    #[test]
    fn join_keeps_shared_visits_only() {
        let a = block("a", &[("1", "BL"), ("2", "BL"), ("3", "BL")], 2, 1.0);
        let b = block("b", &[("1", "BL"), ("3", "BL")], 1, 2.0);
        let joined = join_common_visits(&[a, b]).unwrap();
        assert_eq!(joined.n_rows(), 2);
        assert_eq!(joined.feature_order, vec!["a_0", "a_1", "b_0"]);
        assert_eq!(joined.rows[0].key, VisitKey::new("1", "BL"));
        assert_eq!(joined.rows[1].key, VisitKey::new("3", "BL"));
    }

    #[test]
    fn join_identity_when_all_shared() {
        let a = block("a", &[("1", "BL"), ("2", "BL")], 2, 1.0);
        let b = block("b", &[("1", "BL"), ("2", "BL")], 1, 2.0);
        let joined = join_common_visits(&[a, b]).unwrap();
        assert_eq!(joined.n_rows(), 2);
    }

    #[test]
    fn join_empty_intersection_errors() {
        let a = block("a", &[("1", "BL")], 1, 1.0);
        let b = block("b", &[("2", "BL")], 1, 2.0);
        assert!(matches!(
            join_common_visits(&[a, b]).unwrap_err(),
            IngestError::EmptyJoin
        ));
    }

    /// Scripted join oracle: nested-loop intersection over several blocks
    /// with distinct per-instrument visit sets; the library join must agree
    /// and be strictly smaller than any single block.
    #[test]
    fn join_matches_nested_loop_oracle() {
        let keys_a: Vec<(String, String)> = (0..30).map(|i| (format!("s{i}"), "BL".into())).collect();
        let keys_b: Vec<(String, String)> = (5..28).map(|i| (format!("s{i}"), "BL".into())).collect();
        let keys_c: Vec<(String, String)> = (0..25).filter(|i| i % 2 == 0 || *i > 10)
            .map(|i| (format!("s{i}"), "BL".into()))
            .collect();

        let as_refs = |v: &[(String, String)]| -> Vec<(String, String)> { v.to_vec() };
        let mk = |name: &str, keys: &[(String, String)]| FeatureBlock {
            instrument: name.into(),
            feature_names: vec![format!("{name}_0")],
            rows: keys
                .iter()
                .map(|(s, v)| (VisitKey::new(s.clone(), v.clone()), vec![Some(1.0)]))
                .collect(),
        };
        let blocks = vec![
            mk("a", &as_refs(&keys_a)),
            mk("b", &as_refs(&keys_b)),
            mk("c", &as_refs(&keys_c)),
        ];

        // Oracle: brute-force membership test.
        let mut oracle: Vec<(String, String)> = Vec::new();
        for ka in &keys_a {
            let in_b = keys_b.iter().any(|k| k == ka);
            let in_c = keys_c.iter().any(|k| k == ka);
            if in_b && in_c {
                oracle.push(ka.clone());
            }
        }
        oracle.sort();

        let joined = join_common_visits(&blocks).unwrap();
        let got: Vec<(String, String)> = joined
            .rows
            .iter()
            .map(|r| (r.key.subject_id.clone(), r.key.visit_id.clone()))
            .collect();
        assert_eq!(got, oracle);
        assert!(joined.n_rows() < keys_a.len());
        assert!(joined.n_rows() < keys_b.len());
        assert!(joined.n_rows() < keys_c.len());
    }

    #[test]
    fn join_commutes_up_to_column_order() {
        let a = block("a", &[("1", "BL"), ("2", "BL"), ("3", "V04")], 2, 1.0);
        let b = block("b", &[("2", "BL"), ("3", "V04")], 1, 2.0);
        let ab = join_common_visits(&[a.clone(), b.clone()]).unwrap();
        let ba = join_common_visits(&[b, a]).unwrap();
        let keys_ab: Vec<&VisitKey> = ab.rows.iter().map(|r| &r.key).collect();
        let keys_ba: Vec<&VisitKey> = ba.rows.iter().map(|r| &r.key).collect();
        assert_eq!(keys_ab, keys_ba);
    }

    #[test]
    fn drop_incomplete_counts_and_is_idempotent() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let values = if i == 3 || i == 7 {
                vec![Some(1.0), None]
            } else {
                vec![Some(1.0), Some(2.0)]
            };
            rows.push(VisitRow {
                key: VisitKey::new(format!("s{i}"), "BL"),
                values,
                label: None,
            });
        }
        let m = FeatureMatrix {
            feature_order: vec!["a".into(), "b".into()],
            rows,
        };
        let (clean, dropped) = drop_incomplete(m);
        assert_eq!(dropped, 2);
        assert_eq!(clean.n_rows(), 8);
        let (again, dropped2) = drop_incomplete(clean.clone());
        assert_eq!(dropped2, 0);
        assert_eq!(again, clean);
    }

    #[test]
    fn drop_incomplete_identity_when_complete() {
        let m = FeatureMatrix {
            feature_order: vec!["a".into()],
            rows: vec![VisitRow {
                key: VisitKey::new("s", "BL"),
                values: vec![Some(1.0)],
                label: None,
            }],
        };
        let (clean, dropped) = drop_incomplete(m.clone());
        assert_eq!(dropped, 0);
        assert_eq!(clean, m);
    }

    fn labeled_fixture() -> (FeatureMatrix, BTreeMap<VisitKey, i64>) {
        let stages: Vec<(&str, i64)> = vec![
            ("h1", 0),
            ("h2", 0),
            ("h3", 0),
            ("h4", 0),
            ("m1", 1),
            ("m2", 2),
            ("m3", 2),
            ("s1", 3),
            ("x1", 101),
        ];
        let rows = stages
            .iter()
            .map(|(s, _)| VisitRow {
                key: VisitKey::new(*s, "BL"),
                values: vec![Some(1.0)],
                label: None,
            })
            .collect();
        let table = stages
            .iter()
            .map(|(s, c)| (VisitKey::new(*s, "BL"), *c))
            .collect();
        (
            FeatureMatrix {
                feature_order: vec!["a".into()],
                rows,
            },
            table,
        )
    }

    #[test]
    fn severity_hand_count_fixture() {
        let (m, table) = labeled_fixture();
        let (labeled, excluded) = assign_severity(m, &table).unwrap();
        assert_eq!(excluded, 1);
        let counts = labeled.class_counts();
        assert_eq!(counts[&SeverityClass::Healthy], 4);
        assert_eq!(counts[&SeverityClass::Mild], 3);
        assert_eq!(counts[&SeverityClass::ModSevere], 1);
        assert_eq!(labeled.n_rows(), 8);
    }

    #[test]
    fn stage_two_maps_to_mild() {
        let m = FeatureMatrix {
            feature_order: vec!["a".into()],
            rows: vec![VisitRow {
                key: VisitKey::new("p", "BL"),
                values: vec![Some(1.0)],
                label: None,
            }],
        };
        let mut table = BTreeMap::new();
        table.insert(VisitKey::new("p", "BL"), 2);
        let (labeled, _) = assign_severity(m, &table).unwrap();
        assert_eq!(
            labeled.rows[0].label.unwrap().consolidated,
            SeverityClass::Mild
        );
        assert_eq!(labeled.rows[0].label.unwrap().raw_stage, 2);
    }

    #[test]
    fn missing_stage_entry_lists_visit() {
        let (m, mut table) = labeled_fixture();
        table.remove(&VisitKey::new("m2", "BL"));
        let err = assign_severity(m, &table).unwrap_err();
        match err {
            IngestError::MissingStage { count, subject, .. } => {
                assert_eq!(count, 1);
                assert_eq!(subject, "m2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_visit_in_block_rejected() {
        let (_, inst) = epw_schema();
        let table = RawItemTable {
            instrument: "epworth".into(),
            item_names: inst.items.clone(),
            score_names: vec![],
            rows: vec![
                RawItemRow {
                    key: VisitKey::new("3001", "BL"),
                    item_values: vec![Some(0.0); 8],
                    score_values: vec![],
                },
                RawItemRow {
                    key: VisitKey::new("3001", "BL"),
                    item_values: vec![Some(1.0); 8],
                    score_values: vec![],
                },
            ],
        };
        assert!(matches!(
            derive_instrument_features(&table, &inst).unwrap_err(),
            IngestError::DuplicateVisit { .. }
        ));
    }
}
