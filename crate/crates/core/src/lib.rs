//! Visit-level Parkinson's disease severity staging toolkit.
//!
//! The pipeline runs in five stages, each usable on its own:
//!
//! 1. [`ingest`] — load per-instrument assessment CSVs, derive features
//!    according to a declarative schema, inner-join instruments on
//!    (subject, visit), drop incomplete rows, and attach consolidated
//!    severity labels.
//! 2. [`preprocess`] — z-score standardization fitted on training rows only.
//! 3. [`learners`] — class-weighted logistic regression, KNN, random forest,
//!    and second-order gradient-boosted trees under one predict contract.
//! 4. [`evaluate`] — stratified holdout + 5-fold CV with grid search, five
//!    metrics, and out-of-fold confusion matrices.
//! 5. [`attribution`] / [`embed`] — exact tree-ensemble Shapley attribution
//!    (with a brute-force oracle) and exact t-SNE projections.
//!
//! [`synth`] generates schema-compatible synthetic cohorts with planted
//! discriminative signal so every stage is testable without restricted data.

pub mod attribution;
pub mod data;
pub mod embed;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod learners;
pub mod preprocess;
pub mod synth;
pub mod util;

/// Instrument schema shipped with the toolkit (15 instruments, 230 item
/// columns, 208 derived features).
pub const BUILTIN_SCHEMA_TOML: &str = include_str!("../data/instrument_schema.toml");
