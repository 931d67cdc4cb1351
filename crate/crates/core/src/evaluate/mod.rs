//! The four classification tasks, the holdout/CV protocol, and the
//! per-model evaluation harness.

pub mod grid;
pub mod metrics;
pub mod split;

pub use grid::{
    build_train_config, grid_search, grid_search_with_folds, ConfigScore, GridSearchResult,
    GridSpec, ParamMap, ParamValue, TrainConfig,
};
pub use metrics::{compute_metrics, normalized_confusion, oof_confusion, MetricValues};
pub use split::{grouped_holdout, grouped_kfold, stratified_holdout, stratified_kfold};

use serde::{Deserialize, Serialize};

use crate::data::{DenseMatrix, FeatureMatrix, SeverityClass, VisitKey};
use crate::error::EvalError;
use crate::learners::{Model, ModelKind};
use crate::preprocess::Standardizer;
use crate::util::mean_sd;

/// The three binary severity boundaries plus the three-class setting.
/// Binary class indexing is 0 = less severe, 1 = more severe; the more
/// severe class is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    HealthyVsMild,
    HealthyVsModSevere,
    MildVsModSevere,
    ThreeClass,
}

impl Task {
    pub fn all() -> [Task; 4] {
        [
            Task::HealthyVsMild,
            Task::HealthyVsModSevere,
            Task::MildVsModSevere,
            Task::ThreeClass,
        ]
    }

    pub fn binary() -> [Task; 3] {
        [
            Task::HealthyVsMild,
            Task::HealthyVsModSevere,
            Task::MildVsModSevere,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::HealthyVsMild => "healthy_vs_mild",
            Task::HealthyVsModSevere => "healthy_vs_modsevere",
            Task::MildVsModSevere => "mild_vs_modsevere",
            Task::ThreeClass => "three_class",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::all().into_iter().find(|t| t.name() == s)
    }

    /// Included classes, in class-index order.
    pub fn classes(&self) -> &'static [SeverityClass] {
        match self {
            Task::HealthyVsMild => &[SeverityClass::Healthy, SeverityClass::Mild],
            Task::HealthyVsModSevere => &[SeverityClass::Healthy, SeverityClass::ModSevere],
            Task::MildVsModSevere => &[SeverityClass::Mild, SeverityClass::ModSevere],
            Task::ThreeClass => &[
                SeverityClass::Healthy,
                SeverityClass::Mild,
                SeverityClass::ModSevere,
            ],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes().len()
    }

    /// Positive class for binary tasks (always the more severe class).
    pub fn positive(&self) -> Option<usize> {
        match self {
            Task::ThreeClass => None,
            _ => Some(1),
        }
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        self.classes().iter().map(|c| c.name()).collect()
    }

    /// Filter a labeled matrix down to this task's classes. Rows keep their
    /// matrix order; labels map to task-local class indices.
    pub fn project(&self, matrix: &FeatureMatrix) -> Result<ProjectedTask, EvalError> {
        let classes = self.classes();
        let mut x_rows = Vec::new();
        let mut y = Vec::new();
        let mut keys = Vec::new();
        for row in &matrix.rows {
            let label = row.label.ok_or(EvalError::UnlabeledRows)?;
            if let Some(class_index) = classes.iter().position(|c| *c == label.consolidated) {
                let values: Option<Vec<f64>> = row.values.iter().copied().collect();
                let values = values.ok_or(EvalError::IncompleteRows)?;
                x_rows.push(values);
                y.push(class_index);
                keys.push(row.key.clone());
            }
        }
        if x_rows.is_empty() {
            return Err(EvalError::Empty);
        }
        Ok(ProjectedTask {
            task: *self,
            x: DenseMatrix::from_rows(&x_rows),
            y,
            keys,
            feature_names: matrix.feature_order.clone(),
        })
    }
}

/// One task's rows: raw (unstandardized) features, task-local labels, and
/// the visit keys they came from.
#[derive(Debug, Clone)]
pub struct ProjectedTask {
    pub task: Task,
    pub x: DenseMatrix,
    pub y: Vec<usize>,
    pub keys: Vec<VisitKey>,
    pub feature_names: Vec<String>,
}

impl ProjectedTask {
    pub fn subjects(&self) -> Vec<String> {
        self.keys.iter().map(|k| k.subject_id.clone()).collect()
    }
}

/// Per-fold metric values with fold mean and population SD.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_fold: Vec<MetricValues>,
    pub mean: MetricValues,
    pub sd: MetricValues,
}

impl MetricReport {
    /// Per-metric view: metric name -> (mean, sd, per-fold values).
    pub fn by_metric(&self) -> std::collections::BTreeMap<&'static str, (f64, f64, Vec<f64>)> {
        let mut out = std::collections::BTreeMap::new();
        for (name, _) in self.mean.as_pairs() {
            let pick = |m: &MetricValues| -> f64 {
                m.as_pairs()
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, v)| *v)
                    .expect("metric name")
            };
            out.insert(
                name,
                (
                    pick(&self.mean),
                    pick(&self.sd),
                    self.per_fold.iter().map(pick).collect(),
                ),
            );
        }
        out
    }

    pub fn from_folds(per_fold: Vec<MetricValues>) -> Self {
        let collect = |f: fn(&MetricValues) -> f64| -> Vec<f64> { per_fold.iter().map(f).collect() };
        let agg = |f: fn(&MetricValues) -> f64| mean_sd(&collect(f));
        let (acc, acc_sd) = agg(|m| m.accuracy);
        let (f1, f1_sd) = agg(|m| m.f1);
        let (roc, roc_sd) = agg(|m| m.roc_auc);
        let (pr, pr_sd) = agg(|m| m.pr_auc);
        let (mcc, mcc_sd) = agg(|m| m.mcc);
        MetricReport {
            per_fold,
            mean: MetricValues {
                accuracy: acc,
                f1,
                roc_auc: roc,
                pr_auc: pr,
                mcc,
            },
            sd: MetricValues {
                accuracy: acc_sd,
                f1: f1_sd,
                roc_auc: roc_sd,
                pr_auc: pr_sd,
                mcc: mcc_sd,
            },
        }
    }
}

/// Protocol knobs: 80/20 holdout, 5 folds, visit-level splitting by default
/// with an optional subject-grouped mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub holdout_fraction: f64,
    pub folds: usize,
    pub grouped: bool,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.2,
            folds: 5,
            grouped: false,
            seed: 0,
        }
    }
}

/// Everything the harness reports for one (task, model) pair. Fold-mean and
/// one-shot holdout numbers are both emitted, labeled, because either could
/// populate a results table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: ModelKind,
    pub best_params: ParamMap,
    pub grid_scores: Vec<ConfigScore>,
    /// Five metrics per fold at the best configuration.
    pub cv: MetricReport,
    /// Out-of-fold confusion over the training partition, row-normalized.
    pub oof_confusion: Vec<Vec<f64>>,
    /// One-shot metrics of the final model (retrained on the full training
    /// partition) on the held-out test partition.
    pub holdout: MetricValues,
    pub holdout_confusion: Vec<Vec<f64>>,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Final artifacts of one (task, model) evaluation: the report plus the
/// refit model and its standardizer, for downstream explanation.
pub struct EvaluatedModel {
    pub report: ModelEvaluation,
    pub final_model: Model,
    pub standardizer: Standardizer,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub fold_plan: Vec<(Vec<usize>, Vec<usize>)>,
    /// (fold model, validation indices into the training partition) pairs.
    pub fold_models: Vec<(Model, Vec<usize>)>,
}

/// Run the full protocol for one task and one model family: stratified
/// holdout, grid search with per-fold standardizer refits, per-fold metrics
/// and OOF confusion at the best configuration, then a final refit on the
/// whole training partition evaluated once on the holdout.
pub fn evaluate_model(
    projected: &ProjectedTask,
    grid: &GridSpec,
    protocol: &EvalProtocol,
) -> Result<EvaluatedModel, EvalError> {
    let task = projected.task;
    let n_classes = task.n_classes();
    let subjects = projected.subjects();

    let (train_idx, test_idx) = if protocol.grouped {
        grouped_holdout(
            &projected.y,
            &subjects,
            n_classes,
            protocol.holdout_fraction,
            protocol.seed,
        )?
    } else {
        stratified_holdout(
            &projected.y,
            n_classes,
            protocol.holdout_fraction,
            protocol.seed,
        )?
    };

    let x_train = projected.x.select_rows(&train_idx);
    let y_train: Vec<usize> = train_idx.iter().map(|&i| projected.y[i]).collect();

    let fold_plan = if protocol.grouped {
        let train_subjects: Vec<String> = train_idx
            .iter()
            .map(|&i| subjects[i].clone())
            .collect();
        grouped_kfold(
            &y_train,
            &train_subjects,
            n_classes,
            protocol.folds,
            protocol.seed,
        )?
    } else {
        stratified_kfold(&y_train, n_classes, protocol.folds, protocol.seed)?
    };

    let search = grid_search_with_folds(
        &x_train,
        &y_train,
        &projected.feature_names,
        n_classes,
        task.positive(),
        grid,
        &fold_plan,
        protocol.seed,
    )?;
    let best_config = build_train_config(grid.model, &search.best_params, protocol.seed)?;

    // Re-run the winning configuration per fold for the full metric set and
    // the out-of-fold confusion.
    let mut per_fold = Vec::with_capacity(fold_plan.len());
    let mut oof: Vec<Option<usize>> = vec![None; y_train.len()];
    let mut fold_models = Vec::with_capacity(fold_plan.len());
    for (fit_idx, val_idx) in &fold_plan {
        let (model, y_val, y_pred, scores) = grid::run_fold(
            &x_train,
            &y_train,
            &projected.feature_names,
            n_classes,
            task.positive(),
            &best_config,
            fit_idx,
            val_idx,
        )?;
        per_fold.push(compute_metrics(
            &y_val,
            &y_pred,
            &scores,
            n_classes,
            task.positive(),
        )?);
        for (local, &row) in val_idx.iter().enumerate() {
            oof[row] = Some(y_pred[local]);
        }
        fold_models.push((model, val_idx.clone()));
    }
    let cv = MetricReport::from_folds(per_fold);
    let oof_conf = oof_confusion(&y_train, &oof, n_classes)?;

    // Final refit on the full training partition, one-shot holdout metrics.
    let standardizer = Standardizer::fit(&x_train, &projected.feature_names, "train-80pct")
        .map_err(|e| EvalError::Train(crate::error::TrainError::InvalidConfig(e.to_string())))?;
    let x_train_std = standardizer
        .transform(&x_train)
        .map_err(|e| EvalError::Train(crate::error::TrainError::InvalidConfig(e.to_string())))?;
    let final_model = best_config.train(&x_train_std, &y_train, n_classes)?;

    let x_test = projected.x.select_rows(&test_idx);
    let y_test: Vec<usize> = test_idx.iter().map(|&i| projected.y[i]).collect();
    let x_test_std = standardizer
        .transform(&x_test)
        .map_err(|e| EvalError::Train(crate::error::TrainError::InvalidConfig(e.to_string())))?;
    let test_scores = final_model.predict_proba(&x_test_std)?;
    let test_pred = final_model.predict_classes(&x_test_std)?;
    let holdout = compute_metrics(&y_test, &test_pred, &test_scores, n_classes, task.positive())?;
    let holdout_confusion = normalized_confusion(&y_test, &test_pred, n_classes);

    Ok(EvaluatedModel {
        report: ModelEvaluation {
            model: grid.model,
            best_params: search.best_params,
            grid_scores: search.scores,
            cv,
            oof_confusion: oof_conf,
            holdout,
            holdout_confusion,
            train_rows: train_idx.len(),
            test_rows: test_idx.len(),
        },
        final_model,
        standardizer,
        train_idx,
        test_idx,
        fold_plan,
        fold_models,
    })
}
