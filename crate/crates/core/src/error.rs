//! Error types shared across the pipeline stages.

use thiserror::Error;

/// Schema-file and CSV-shape failures raised during ingest.
#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to parse schema file: {0}")]
    Parse(String),
    #[error("instrument {instrument}: required column {column} missing from {path}")]
    MissingColumn {
        instrument: String,
        column: String,
        path: String,
    },
    #[error("instrument {instrument}: derivation rule for {feature} references unknown item {item}")]
    UnknownItem {
        instrument: String,
        feature: String,
        item: String,
    },
    #[error("instrument {instrument}: excluded item {item} is referenced by feature {feature}")]
    ExcludedItemUsed {
        instrument: String,
        item: String,
        feature: String,
    },
    #[error("instrument {instrument}: excluded item {item} is not declared in items")]
    UnknownExcludedItem { instrument: String, item: String },
    #[error("duplicate feature name {feature} (instruments {first} and {second})")]
    DuplicateFeature {
        feature: String,
        first: String,
        second: String,
    },
    #[error("instrument {instrument}: duplicate item column {item}")]
    DuplicateItem { instrument: String, item: String },
    #[error("instrument {instrument}: feature {feature} must set exactly one of item/sum/score")]
    AmbiguousRule { instrument: String, feature: String },
    #[error("schema declares no instruments")]
    Empty,
}

/// Data-shape failures raised while assembling the feature matrix.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("instrument {instrument}: duplicate visit ({subject}, {visit})")]
    DuplicateVisit {
        instrument: String,
        subject: String,
        visit: String,
    },
    #[error("join produced no common visits across instruments")]
    EmptyJoin,
    #[error("no stage entry for {count} visit(s), first: ({subject}, {visit})")]
    MissingStage {
        count: usize,
        subject: String,
        visit: String,
    },
    #[error("unrecognized stage code {code} for ({subject}, {visit})")]
    UnknownStageCode {
        code: i64,
        subject: String,
        visit: String,
    },
    #[error("stage table row {row}: {message}")]
    StageTable { row: usize, message: String },
    #[error("feature matrix is empty")]
    EmptyMatrix,
    #[error("feature order mismatch: expected {expected} columns, got {got}")]
    FeatureOrderMismatch { expected: usize, got: usize },
    #[error("matrix still contains missing values (row {row}, feature {feature})")]
    MissingValues { row: usize, feature: String },
}

/// Failures raised by model training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("labels contain a single class; need at least two")]
    SingleClass,
    #[error("class {class} has no samples")]
    MissingClass { class: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("did not converge within {iterations} iterations (gradient inf-norm {grad_norm:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("training matrix is empty")]
    EmptyMatrix,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
}

/// Failures raised at prediction time.
#[derive(Debug, Error)]
pub enum PredictError {
    #[error("feature dimension mismatch: model expects {expected}, data has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k={k} exceeds training size {n}")]
    KTooLarge { k: usize, n: usize },
}

/// Failures raised by splitting, grid search, and metric computation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {class} has {count} rows; minimum {min} required")]
    ClassTooSmall {
        class: String,
        count: usize,
        min: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("every grid configuration failed; first failure: {0}")]
    AllConfigsFailed(String),
    #[error("row {row} was never predicted out-of-fold")]
    UncoveredRow { row: usize },
    #[error("unknown parameter {name} for model {model}")]
    UnknownParameter { name: String, model: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("matrix rows contain missing values; run drop_incomplete first")]
    IncompleteRows,
    #[error("rows lack severity labels; run assign_severity first")]
    UnlabeledRows,
}

/// Failures raised by Shapley attribution.
#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("node {node} of tree {tree} carries cover {cover}; positive cover required")]
    MissingCover { tree: usize, node: usize, cover: f64 },
    #[error("{count} active features exceed the brute-force cap of {cap}")]
    TooManyFeatures { count: usize, cap: usize },
    #[error("feature dimension mismatch: ensemble references feature {feature}, sample has {got}")]
    DimensionMismatch { feature: usize, got: usize },
    #[error("cohort {cohort} has no samples")]
    EmptyCohort { cohort: String },
    #[error("cross-task table requires exactly 3 summaries, got {got}")]
    WrongSummaryCount { got: usize },
    #[error("attribution length {got} does not match feature count {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Failures raised by the t-SNE embedding.
#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("perplexity {perplexity} infeasible for {n} points (need n >= 4*perplexity)")]
    PerplexityInfeasible { perplexity: f64, n: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("q underflowed to zero where p > 0 at pair ({i}, {j})")]
    ZeroAffinity { i: usize, j: usize },
    #[error("affinity matrix is not square: {len} entries for n={n}")]
    NotSquare { len: usize, n: usize },
}

/// Failures raised by the synthetic cohort generator.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("planted feature {0} is not in the schema")]
    UnknownPlantedFeature(String),
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
