//! Exhaustive grid search over model hyperparameters with per-fold
//! standardizer refits, selecting on F1 (binary) or macro-F1 (multiclass).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::{EvalError, TrainError};
use crate::evaluate::metrics;
use crate::evaluate::split::stratified_kfold;
use crate::learners::{
    compute_balanced_weights, train_gbt, train_logistic, train_random_forest, FeatureSubset,
    ForestConfig, GbtConfig, KnnModel, LogisticConfig, Model, ModelKind,
};
use crate::preprocess::Standardizer;

/// One hyperparameter value. Integers and floats are kept distinct so
/// configs echo back exactly as written.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
}

impl ParamValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            ParamValue::Int(v) => *v as f64,
            ParamValue::Float(v) => *v,
        }
    }

    pub fn as_usize(&self) -> Option<usize> {
        match self {
            ParamValue::Int(v) if *v >= 0 => Some(*v as usize),
            _ => None,
        }
    }
}

pub type ParamMap = BTreeMap<String, ParamValue>;

/// Named hyperparameter lists for one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub model: ModelKind,
    /// (name, candidate values) in declared order.
    pub params: Vec<(String, Vec<ParamValue>)>,
}

impl GridSpec {
    /// Cartesian product in grid order: the last declared parameter varies
    /// fastest. Ties during selection resolve to the earliest point.
    pub fn expand(&self) -> Vec<ParamMap> {
        let mut points: Vec<ParamMap> = vec![BTreeMap::new()];
        for (name, values) in &self.params {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for point in &points {
                for value in values {
                    let mut p = point.clone();
                    p.insert(name.clone(), *value);
                    next.push(p);
                }
            }
            points = next;
        }
        points
    }

    /// Documented default grids shipped as configuration.
    pub fn default_for(model: ModelKind) -> GridSpec {
        let params = match model {
            ModelKind::Gbt => vec![
                ("max_depth".into(), vec![ParamValue::Int(3), ParamValue::Int(5), ParamValue::Int(7)]),
                ("n_rounds".into(), vec![ParamValue::Int(100), ParamValue::Int(300)]),
                (
                    "learning_rate".into(),
                    vec![ParamValue::Float(0.05), ParamValue::Float(0.1)],
                ),
                ("lambda".into(), vec![ParamValue::Float(1.0)]),
            ],
            ModelKind::Logistic => vec![(
                "l2".into(),
                vec![
                    ParamValue::Float(0.01),
                    ParamValue::Float(0.1),
                    ParamValue::Float(1.0),
                ],
            )],
            ModelKind::Knn => vec![(
                "k".into(),
                vec![ParamValue::Int(5), ParamValue::Int(11), ParamValue::Int(21)],
            )],
            ModelKind::Forest => vec![
                ("n_trees".into(), vec![ParamValue::Int(200)]),
                ("max_depth".into(), vec![ParamValue::Int(8), ParamValue::Int(16)]),
            ],
        };
        GridSpec { model, params }
    }
}

/// Fully-resolved training configuration for one grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainConfig {
    Gbt(GbtConfig),
    Logistic(LogisticConfig),
    Forest(ForestConfig),
    Knn { k: usize },
}

/// Resolve a parameter map against a model family's defaults. Unknown
/// parameter names are rejected so grid typos cannot silently no-op.
pub fn build_train_config(
    model: ModelKind,
    params: &ParamMap,
    seed: u64,
) -> Result<TrainConfig, EvalError> {
    let unknown = |name: &String| EvalError::UnknownParameter {
        name: name.clone(),
        model: model.name().to_string(),
    };
    match model {
        ModelKind::Gbt => {
            let mut cfg = GbtConfig {
                seed,
                ..GbtConfig::default()
            };
            for (name, value) in params {
                match name.as_str() {
                    "n_rounds" => cfg.n_rounds = value.as_usize().unwrap_or(0),
                    "learning_rate" => cfg.learning_rate = value.as_f64(),
                    "max_depth" => cfg.max_depth = value.as_usize().unwrap_or(0),
                    "min_child_weight" => cfg.min_child_weight = value.as_f64(),
                    "lambda" => cfg.lambda = value.as_f64(),
                    "gamma" => cfg.gamma = value.as_f64(),
                    _ => return Err(unknown(name)),
                }
            }
            Ok(TrainConfig::Gbt(cfg))
        }
        ModelKind::Logistic => {
            let mut cfg = LogisticConfig::default();
            for (name, value) in params {
                match name.as_str() {
                    "l2" => cfg.l2 = value.as_f64(),
                    "max_iter" => cfg.max_iter = value.as_usize().unwrap_or(0),
                    "tol" => cfg.tol = value.as_f64(),
                    _ => return Err(unknown(name)),
                }
            }
            Ok(TrainConfig::Logistic(cfg))
        }
        ModelKind::Forest => {
            let mut cfg = ForestConfig {
                seed,
                ..ForestConfig::default()
            };
            for (name, value) in params {
                match name.as_str() {
                    "n_trees" => cfg.n_trees = value.as_usize().unwrap_or(0),
                    "max_depth" => cfg.max_depth = value.as_usize().unwrap_or(0),
                    "min_leaf" => cfg.min_leaf = value.as_usize().unwrap_or(0),
                    "features_per_split" => {
                        cfg.features_per_split = value
                            .as_usize()
                            .map(FeatureSubset::Fixed)
                            .unwrap_or(FeatureSubset::Sqrt)
                    }
                    _ => return Err(unknown(name)),
                }
            }
            Ok(TrainConfig::Forest(cfg))
        }
        ModelKind::Knn => {
            let mut k = 5usize;
            for (name, value) in params {
                match name.as_str() {
                    "k" => k = value.as_usize().unwrap_or(0),
                    _ => return Err(unknown(name)),
                }
            }
            Ok(TrainConfig::Knn { k })
        }
    }
}

impl TrainConfig {
    /// Train on an already-standardized matrix. Weight-aware learners derive
    /// their class weights from the labels; KNN runs unweighted.
    pub fn train(
        &self,
        x: &DenseMatrix,
        y: &[usize],
        n_classes: usize,
    ) -> Result<Model, TrainError> {
        match self {
            TrainConfig::Gbt(cfg) => {
                let balance = compute_balanced_weights(y, n_classes)?;
                Ok(Model::Gbt(train_gbt(x, y, &balance, cfg)?))
            }
            TrainConfig::Logistic(cfg) => {
                let balance = compute_balanced_weights(y, n_classes)?;
                Ok(Model::Logistic(train_logistic(x, y, &balance, cfg)?))
            }
            TrainConfig::Forest(cfg) => {
                let balance = compute_balanced_weights(y, n_classes)?;
                Ok(Model::Forest(train_random_forest(x, y, &balance, cfg)?))
            }
            TrainConfig::Knn { k } => Ok(Model::Knn(KnnModel::fit(
                x.clone(),
                y.to_vec(),
                n_classes,
                *k,
            )?)),
        }
    }
}

/// Cross-validated score of one grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigScore {
    pub params: ParamMap,
    /// Selection-metric value per fold; empty when the config failed.
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
    /// Failure report when any fold could not be trained.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub model: ModelKind,
    pub best_index: usize,
    pub best_params: ParamMap,
    pub scores: Vec<ConfigScore>,
}

/// Evaluate every grid point over stratified folds on raw (unstandardized)
/// training data; the standardizer refits inside each fold on the fit rows
/// only. Selection is by highest mean F1 (binary positive class) or
/// macro-F1; exact ties resolve to the earliest grid point.
pub fn grid_search(
    x_raw: &DenseMatrix,
    y: &[usize],
    feature_names: &[String],
    n_classes: usize,
    positive: Option<usize>,
    grid: &GridSpec,
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult, EvalError> {
    grid_search_with_folds(
        x_raw,
        y,
        feature_names,
        n_classes,
        positive,
        grid,
        &stratified_kfold(y, n_classes, folds, seed)?,
        seed,
    )
}

/// Grid search over caller-supplied folds (used by the subject-grouped mode).
#[allow(clippy::too_many_arguments)]
pub fn grid_search_with_folds(
    x_raw: &DenseMatrix,
    y: &[usize],
    feature_names: &[String],
    n_classes: usize,
    positive: Option<usize>,
    grid: &GridSpec,
    fold_plan: &[(Vec<usize>, Vec<usize>)],
    seed: u64,
) -> Result<GridSearchResult, EvalError> {
    let points = grid.expand();
    if points.is_empty() {
        return Err(EvalError::EmptyGrid);
    }

    let scores: Vec<ConfigScore> = points
        .par_iter()
        .map(|params| score_config(x_raw, y, feature_names, n_classes, positive, grid.model, params, fold_plan, seed))
        .collect();

    let mut best_index = None;
    for (i, score) in scores.iter().enumerate() {
        if score.failed.is_some() {
            continue;
        }
        let better = match best_index {
            None => true,
            Some(b) => scores[b as usize].mean_score < score.mean_score,
        };
        if better {
            best_index = Some(i as isize);
        }
    }
    let best_index = match best_index {
        Some(i) => i as usize,
        None => {
            let first_failure = scores
                .iter()
                .find_map(|s| s.failed.clone())
                .unwrap_or_else(|| "no configurations".into());
            return Err(EvalError::AllConfigsFailed(first_failure));
        }
    };

    Ok(GridSearchResult {
        model: grid.model,
        best_index,
        best_params: scores[best_index].params.clone(),
        scores,
    })
}

#[allow(clippy::too_many_arguments)]
fn score_config(
    x_raw: &DenseMatrix,
    y: &[usize],
    feature_names: &[String],
    n_classes: usize,
    positive: Option<usize>,
    model: ModelKind,
    params: &ParamMap,
    fold_plan: &[(Vec<usize>, Vec<usize>)],
    seed: u64,
) -> ConfigScore {
    let config = match build_train_config(model, params, seed) {
        Ok(c) => c,
        Err(e) => {
            return ConfigScore {
                params: params.clone(),
                fold_scores: vec![],
                mean_score: f64::NEG_INFINITY,
                failed: Some(e.to_string()),
            }
        }
    };
    let mut fold_scores = Vec::with_capacity(fold_plan.len());
    for (fit_idx, val_idx) in fold_plan {
        match run_fold(x_raw, y, feature_names, n_classes, positive, &config, fit_idx, val_idx) {
            Ok((_, y_val, y_pred, _)) => {
                let score = match positive {
                    Some(pos) => metrics::class_f1(&y_val, &y_pred, pos),
                    None => metrics::macro_f1(&y_val, &y_pred, n_classes),
                };
                fold_scores.push(score);
            }
            Err(e) => {
                return ConfigScore {
                    params: params.clone(),
                    fold_scores: vec![],
                    mean_score: f64::NEG_INFINITY,
                    failed: Some(e.to_string()),
                }
            }
        }
    }
    let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
    ConfigScore {
        params: params.clone(),
        fold_scores,
        mean_score,
        failed: None,
    }
}

/// Train on the fit rows (standardizer fitted there only) and predict the
/// validation rows. Returns (fold model, val labels, val predictions, val
/// probability scores).
#[allow(clippy::too_many_arguments)]
pub fn run_fold(
    x_raw: &DenseMatrix,
    y: &[usize],
    feature_names: &[String],
    n_classes: usize,
    _positive: Option<usize>,
    config: &TrainConfig,
    fit_idx: &[usize],
    val_idx: &[usize],
) -> Result<(Model, Vec<usize>, Vec<usize>, DenseMatrix), EvalError> {
    let x_fit_raw = x_raw.select_rows(fit_idx);
    let y_fit: Vec<usize> = fit_idx.iter().map(|&i| y[i]).collect();
    let standardizer = Standardizer::fit(&x_fit_raw, feature_names, "fold-fit")
        .map_err(|e| EvalError::Train(TrainError::InvalidConfig(e.to_string())))?;
    let x_fit = standardizer
        .transform(&x_fit_raw)
        .map_err(|e| EvalError::Train(TrainError::InvalidConfig(e.to_string())))?;
    let model = config.train(&x_fit, &y_fit, n_classes)?;

    let x_val_raw = x_raw.select_rows(val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();
    let x_val = standardizer
        .transform(&x_val_raw)
        .map_err(|e| EvalError::Train(TrainError::InvalidConfig(e.to_string())))?;
    let scores = model.predict_proba(&x_val)?;
    let y_pred = model.predict_classes(&x_val)?;
    Ok((model, y_val, y_pred, scores))
}
