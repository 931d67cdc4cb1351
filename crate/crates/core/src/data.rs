//! Core data types: visit keys, severity labels, and feature matrices.

use serde::{Deserialize, Serialize};

use crate::error::IngestError;

/// Identifies one clinic visit of one subject. Repeated visits of the same
/// subject are independent rows everywhere in the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VisitKey {
    pub subject_id: String,
    pub visit_id: String,
}

impl VisitKey {
    pub fn new(subject: impl Into<String>, visit: impl Into<String>) -> Self {
        Self {
            subject_id: subject.into(),
            visit_id: visit.into(),
        }
    }
}

impl std::fmt::Display for VisitKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.subject_id, self.visit_id)
    }
}

/// Raw stage code carried in the stage table. Healthy-arm visits are coded 0;
/// PD-arm visits carry the clinical stage 1-5 or the sentinel 101.
pub const HEALTHY_MARKER: i64 = 0;
/// Stage code of unknown meaning; rows carrying it are excluded, never
/// interpreted.
pub const SENTINEL_STAGE: i64 = 101;

/// Consolidated severity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityClass {
    Healthy,
    Mild,
    ModSevere,
    Excluded,
}

impl SeverityClass {
    pub fn name(self) -> &'static str {
        match self {
            SeverityClass::Healthy => "Healthy",
            SeverityClass::Mild => "Mild",
            SeverityClass::ModSevere => "ModSevere",
            SeverityClass::Excluded => "Excluded",
        }
    }
}

/// Raw stage plus its consolidated class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityLabel {
    pub raw_stage: i64,
    pub consolidated: SeverityClass,
}

impl SeverityLabel {
    /// Consolidate a raw stage code. Stages 1-2 map to Mild, 3-5 to
    /// ModSevere, the healthy marker to Healthy, and the sentinel 101 to
    /// Excluded. Anything else is rejected.
    pub fn from_raw(raw_stage: i64) -> Option<Self> {
        let consolidated = match raw_stage {
            HEALTHY_MARKER => SeverityClass::Healthy,
            1 | 2 => SeverityClass::Mild,
            3..=5 => SeverityClass::ModSevere,
            SENTINEL_STAGE => SeverityClass::Excluded,
            _ => return None,
        };
        Some(Self {
            raw_stage,
            consolidated,
        })
    }
}

/// One joined visit-level row: feature values aligned to the matrix's
/// `feature_order`, plus an optional severity label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRow {
    pub key: VisitKey,
    pub values: Vec<Option<f64>>,
    pub label: Option<SeverityLabel>,
}

/// Visit-level feature matrix. Values may be missing until
/// [`crate::ingest::drop_incomplete`] runs; labels are attached by
/// [`crate::ingest::assign_severity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub feature_order: Vec<String>,
    pub rows: Vec<VisitRow>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_order.len()
    }

    /// Counts of consolidated classes over labeled rows.
    pub fn class_counts(&self) -> std::collections::BTreeMap<SeverityClass, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for row in &self.rows {
            if let Some(label) = row.label {
                *counts.entry(label.consolidated).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Densify into a numeric matrix. Fails if any value is still missing.
    pub fn to_dense(&self) -> Result<DenseMatrix, IngestError> {
        let mut data = Vec::with_capacity(self.n_rows() * self.n_features());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row.values.iter().enumerate() {
                match v {
                    Some(x) => data.push(*x),
                    None => {
                        return Err(IngestError::MissingValues {
                            row: i,
                            feature: self.feature_order[j].clone(),
                        })
                    }
                }
            }
        }
        Ok(DenseMatrix::from_vec(self.n_rows(), self.n_features(), data))
    }
}

/// Row-major dense matrix of f64. Deliberately minimal: the pipeline only
/// needs row access, shape checks, and construction helpers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "data length must be rows*cols");
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    /// New matrix keeping the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}
