//! Class-weighted logistic regression trained with L-BFGS.
//!
//! Minimizes the weighted negative log-likelihood plus an L2 penalty
//! (lambda/2)*||w||^2 on the weights (bias unpenalized). Training stops when
//! the gradient infinity-norm drops below the tolerance; exhausting the
//! iteration budget without reaching it is an error carrying the final norm.

use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::{PredictError, TrainError};
use crate::learners::balance::ClassBalanceInfo;
use crate::learners::tree::{sigmoid, softmax};

/// Fitted linear classifier. Binary models store one weight vector; models
/// with three or more classes store one per class and predict via softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub n_classes: usize,
    pub n_features: usize,
    /// Row-major [group][feature]; one group for binary, K for multiclass.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub l2_penalty: f64,
}

impl LinearModel {
    fn n_groups(&self) -> usize {
        if self.n_classes == 2 {
            1
        } else {
            self.n_classes
        }
    }

    fn margins(&self, x: &[f64]) -> Vec<f64> {
        let groups = self.n_groups();
        let mut out = Vec::with_capacity(groups);
        for k in 0..groups {
            let w = &self.weights[k * self.n_features..(k + 1) * self.n_features];
            let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            out.push(dot + self.bias[k]);
        }
        out
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Result<Vec<f64>, PredictError> {
        if x.len() != self.n_features {
            return Err(PredictError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let margins = self.margins(x);
        Ok(if self.n_classes == 2 {
            let p = sigmoid(margins[0]);
            vec![1.0 - p, p]
        } else {
            softmax(&margins)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 500,
            tol: 1e-5,
        }
    }
}

/// Objective closure shared by training and the gradient tests: weighted NLL
/// plus L2 on weights. Parameters are flattened [weights..., biases...].
pub(crate) struct LogisticProblem<'a> {
    pub x: &'a DenseMatrix,
    pub y: &'a [usize],
    pub sample_weights: Vec<f64>,
    pub n_groups: usize,
    pub l2: f64,
}

impl LogisticProblem<'_> {
    pub fn n_params(&self) -> usize {
        self.n_groups * (self.x.n_cols() + 1)
    }

    fn split(&self) -> (usize, usize) {
        let d = self.x.n_cols();
        (self.n_groups * d, d)
    }

    /// Loss and gradient at `params`.
    pub fn eval(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let (w_len, d) = self.split();
        let (w, b) = params.split_at(w_len);
        grad.fill(0.0);
        let (gw, gb) = grad.split_at_mut(w_len);
        let mut loss = 0.0;

        if self.n_groups == 1 {
            for i in 0..self.x.n_rows() {
                let row = self.x.row(i);
                let margin: f64 = w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>() + b[0];
                let target = if self.y[i] == 1 { 1.0 } else { 0.0 };
                let sw = self.sample_weights[i];
                // log(1+exp(m)) - t*m, computed stably.
                loss += sw * (softplus(margin) - target * margin);
                let residual = sw * (sigmoid(margin) - target);
                for j in 0..d {
                    gw[j] += residual * row[j];
                }
                gb[0] += residual;
            }
        } else {
            for i in 0..self.x.n_rows() {
                let row = self.x.row(i);
                let mut margins = vec![0.0; self.n_groups];
                for k in 0..self.n_groups {
                    let wk = &w[k * d..(k + 1) * d];
                    margins[k] = wk.iter().zip(row).map(|(a, v)| a * v).sum::<f64>() + b[k];
                }
                let probs = softmax(&margins);
                let sw = self.sample_weights[i];
                loss -= sw * probs[self.y[i]].max(1e-300).ln();
                for k in 0..self.n_groups {
                    let target = if self.y[i] == k { 1.0 } else { 0.0 };
                    let residual = sw * (probs[k] - target);
                    let gk = &mut gw[k * d..(k + 1) * d];
                    for j in 0..d {
                        gk[j] += residual * row[j];
                    }
                    gb[k] += residual;
                }
            }
        }

        for j in 0..w_len {
            loss += 0.5 * self.l2 * w[j] * w[j];
            gw[j] += self.l2 * w[j];
        }
        loss
    }

    /// Bias initialization: weighted log-odds (binary) or weighted
    /// log-priors (multiclass), weights zero.
    pub fn init_params(&self) -> Vec<f64> {
        let d = self.x.n_cols();
        let mut params = vec![0.0; self.n_params()];
        if self.n_groups == 1 {
            let mut pos = 0.0;
            let mut neg = 0.0;
            for (i, &label) in self.y.iter().enumerate() {
                if label == 1 {
                    pos += self.sample_weights[i];
                } else {
                    neg += self.sample_weights[i];
                }
            }
            params[d] = (pos / neg).ln();
        } else {
            let mut class_w = vec![0.0; self.n_groups];
            let mut total = 0.0;
            for (i, &label) in self.y.iter().enumerate() {
                class_w[label] += self.sample_weights[i];
                total += self.sample_weights[i];
            }
            for k in 0..self.n_groups {
                params[self.n_groups * d + k] = (class_w[k] / total).ln();
            }
        }
        params
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Number of flattened parameters ([weights..., biases...]) the objective
/// takes for a problem shape.
pub fn logistic_param_count(n_features: usize, n_classes: usize) -> usize {
    let groups = if n_classes == 2 { 1 } else { n_classes };
    groups * (n_features + 1)
}

/// Evaluate the training objective at arbitrary parameters: returns the
/// weighted negative log-likelihood plus the L2 penalty and writes the
/// analytic gradient. Exposed so external checks can differentiate the
/// same objective numerically.
pub fn logistic_objective(
    x: &DenseMatrix,
    y: &[usize],
    balance: &ClassBalanceInfo,
    l2: f64,
    params: &[f64],
    grad: &mut [f64],
) -> f64 {
    let n_classes = balance.n_classes();
    let n_groups = if n_classes == 2 { 1 } else { n_classes };
    let problem = LogisticProblem {
        x,
        y,
        sample_weights: y.iter().map(|&c| balance.per_class_weight[c]).collect(),
        n_groups,
        l2,
    };
    problem.eval(params, grad)
}

/// Train with balanced per-class sample weights.
pub fn train_logistic(
    x: &DenseMatrix,
    y: &[usize],
    balance: &ClassBalanceInfo,
    config: &LogisticConfig,
) -> Result<LinearModel, TrainError> {
    if x.n_rows() == 0 {
        return Err(TrainError::EmptyMatrix);
    }
    if x.n_rows() != y.len() {
        return Err(TrainError::InvalidConfig(format!(
            "{} rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    if config.l2 < 0.0 || !config.l2.is_finite() {
        return Err(TrainError::InvalidConfig("l2 must be non-negative".into()));
    }
    let n_classes = balance.n_classes();
    if n_classes < 2 {
        return Err(TrainError::SingleClass);
    }
    for &label in y {
        if label >= n_classes {
            return Err(TrainError::LabelOutOfRange { label, n_classes });
        }
    }
    let n_groups = if n_classes == 2 { 1 } else { n_classes };
    let problem = LogisticProblem {
        x,
        y,
        sample_weights: y.iter().map(|&c| balance.per_class_weight[c]).collect(),
        n_groups,
        l2: config.l2,
    };

    let mut params = problem.init_params();
    if config.max_iter > 0 {
        lbfgs(&problem, &mut params, config.max_iter, config.tol)?;
    }

    let d = x.n_cols();
    let (w, b) = params.split_at(n_groups * d);
    Ok(LinearModel {
        n_classes,
        n_features: d,
        weights: w.to_vec(),
        bias: b.to_vec(),
        l2_penalty: config.l2,
    })
}

const LBFGS_MEMORY: usize = 10;

/// Standard two-loop L-BFGS with Armijo backtracking.
fn lbfgs(
    problem: &LogisticProblem<'_>,
    params: &mut [f64],
    max_iter: usize,
    tol: f64,
) -> Result<(), TrainError> {
    let n = params.len();
    let mut grad = vec![0.0; n];
    let mut loss = problem.eval(params, &mut grad);
    let mut s_history: Vec<Vec<f64>> = Vec::new();
    let mut y_history: Vec<Vec<f64>> = Vec::new();

    for iter in 0..max_iter {
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < tol {
            return Ok(());
        }

        // Two-loop recursion for direction = -H * grad.
        let mut direction = grad.clone();
        let mut alphas = vec![0.0; s_history.len()];
        for i in (0..s_history.len()).rev() {
            let rho = 1.0 / dot(&y_history[i], &s_history[i]);
            alphas[i] = rho * dot(&s_history[i], &direction);
            axpy(-alphas[i], &y_history[i], &mut direction);
        }
        if let (Some(s), Some(yv)) = (s_history.last(), y_history.last()) {
            let scale = dot(s, yv) / dot(yv, yv);
            direction.iter_mut().for_each(|v| *v *= scale);
        }
        for i in 0..s_history.len() {
            let rho = 1.0 / dot(&y_history[i], &s_history[i]);
            let beta = rho * dot(&y_history[i], &direction);
            axpy(alphas[i] - beta, &s_history[i], &mut direction);
        }
        direction.iter_mut().for_each(|v| *v = -*v);

        let directional = dot(&grad, &direction);
        if directional >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            s_history.clear();
            y_history.clear();
            for (dst, g) in direction.iter_mut().zip(&grad) {
                *dst = -g;
            }
        }
        let directional = dot(&grad, &direction);

        // Armijo backtracking.
        let mut step = 1.0;
        let mut new_params = vec![0.0; n];
        let mut new_grad = vec![0.0; n];
        let mut new_loss;
        loop {
            for i in 0..n {
                new_params[i] = params[i] + step * direction[i];
            }
            new_loss = problem.eval(&new_params, &mut new_grad);
            if new_loss <= loss + 1e-4 * step * directional {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(TrainError::NoConvergence {
                    iterations: iter,
                    grad_norm,
                });
            }
        }

        let mut s = vec![0.0; n];
        let mut yv = vec![0.0; n];
        for i in 0..n {
            s[i] = new_params[i] - params[i];
            yv[i] = new_grad[i] - grad[i];
        }
        if dot(&s, &yv) > 1e-12 {
            if s_history.len() == LBFGS_MEMORY {
                s_history.remove(0);
                y_history.remove(0);
            }
            s_history.push(s);
            y_history.push(yv);
        }
        params.copy_from_slice(&new_params);
        grad.copy_from_slice(&new_grad);
        loss = new_loss;
    }

    let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if grad_norm < tol {
        Ok(())
    } else {
        Err(TrainError::NoConvergence {
            iterations: max_iter,
            grad_norm,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
