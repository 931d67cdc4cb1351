//! Exact O(N^2) t-SNE for two-dimensional task visualizations.
//!
//! Per-point Gaussian bandwidths come from a binary search matching the
//! perplexity's entropy target; the embedding minimizes KL(P||Q) by gradient
//! descent with momentum and early exaggeration. No tree approximation: at
//! the cohort sizes this pipeline plots, the exact gradient is affordable
//! and directly testable against finite differences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DenseMatrix;
use crate::error::EmbedError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

/// Final coordinates plus the KL objective recorded at every iteration
/// (always against the unexaggerated P).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    pub kl_trace: Vec<f64>,
}

const ENTROPY_TOLERANCE: f64 = 1e-5;
const BANDWIDTH_SEARCH_ITERS: usize = 200;

/// Embed standardized rows into 2-D.
pub fn tsne_embed(x: &DenseMatrix, config: &EmbeddingConfig) -> Result<Embedding, EmbedError> {
    let n = x.n_rows();
    validate_config(config, n)?;
    for i in 0..n {
        for (j, v) in x.row(i).iter().enumerate() {
            if !v.is_finite() {
                return Err(EmbedError::NonFinite { row: i, col: j });
            }
        }
    }

    let p = joint_affinities(x, config.perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [1e-4 * standard_normal(&mut rng), 1e-4 * standard_normal(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(config.iterations);

    let mut p_active: Vec<f64> = p.iter().map(|v| v * config.exaggeration).collect();
    for iter in 0..config.iterations {
        if iter == config.exaggeration_iters {
            p_active.copy_from_slice(&p);
        }
        let momentum = if iter < config.exaggeration_iters { 0.5 } else { 0.8 };

        let grad = kl_gradient(&p_active, &y);
        for i in 0..n {
            for d in 0..2 {
                velocity[i][d] = momentum * velocity[i][d] - config.learning_rate * grad[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        // Mean-center to pin the embedding's free translation.
        let mut mean = [0.0f64; 2];
        for yi in &y {
            mean[0] += yi[0];
            mean[1] += yi[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        for yi in &mut y {
            yi[0] -= mean[0];
            yi[1] -= mean[1];
        }

        let q = low_dim_affinities(&y).0;
        kl_trace.push(kl_divergence(&p, &q, n)?);
    }

    Ok(Embedding {
        coords: y,
        kl_trace,
    })
}

fn validate_config(config: &EmbeddingConfig, n: usize) -> Result<(), EmbedError> {
    if !(config.perplexity > 0.0 && config.perplexity.is_finite()) {
        return Err(EmbedError::InvalidConfig("perplexity must be positive".into()));
    }
    if config.learning_rate <= 0.0 || config.exaggeration < 1.0 {
        return Err(EmbedError::InvalidConfig(
            "learning_rate must be positive and exaggeration >= 1".into(),
        ));
    }
    if (n as f64) < 4.0 * config.perplexity {
        return Err(EmbedError::PerplexityInfeasible {
            perplexity: config.perplexity,
            n,
        });
    }
    Ok(())
}

/// Box-Muller standard normal; keeps the dependency set flat.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Pairwise squared Euclidean distances, flat n*n.
fn pairwise_sq_distances(x: &DenseMatrix) -> Vec<f64> {
    let n = x.n_rows();
    let mut out = vec![0.0; n * n];
    let rows: Vec<&[f64]> = (0..n).map(|i| x.row(i)).collect();
    out.par_chunks_mut(n).enumerate().for_each(|(i, chunk)| {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2: f64 = rows[i]
                .iter()
                .zip(rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            chunk[j] = d2;
        }
    });
    out
}

/// Conditional affinities P(j|i) with per-point precision found by binary
/// search so each row's Shannon entropy matches ln(perplexity) within
/// tolerance. Returns (flat n*n conditional matrix, per-point betas).
pub fn conditional_affinities(
    x: &DenseMatrix,
    perplexity: f64,
) -> Result<(Vec<f64>, Vec<f64>), EmbedError> {
    let n = x.n_rows();
    let distances = pairwise_sq_distances(x);
    let target_entropy = perplexity.ln();

    let mut p_cond = vec![0.0; n * n];
    let betas: Vec<f64> = p_cond
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let d_row = &distances[i * n..(i + 1) * n];
            let mut beta = 1.0f64;
            let mut beta_min = f64::NEG_INFINITY;
            let mut beta_max = f64::INFINITY;
            for _ in 0..BANDWIDTH_SEARCH_ITERS {
                let mut sum_p = 0.0;
                let mut sum_pd = 0.0;
                for j in 0..n {
                    if i == j {
                        row[j] = 0.0;
                        continue;
                    }
                    let p = (-beta * d_row[j]).exp();
                    row[j] = p;
                    sum_p += p;
                    sum_pd += p * d_row[j];
                }
                // Entropy of the normalized row in nats:
                // H = ln(sum_p) + beta * E[d].
                let entropy = sum_p.ln() + beta * sum_pd / sum_p;
                let diff = entropy - target_entropy;
                if diff.abs() < ENTROPY_TOLERANCE {
                    break;
                }
                if diff > 0.0 {
                    beta_min = beta;
                    beta = if beta_max.is_finite() {
                        (beta + beta_max) / 2.0
                    } else {
                        beta * 2.0
                    };
                } else {
                    beta_max = beta;
                    beta = if beta_min.is_finite() {
                        (beta + beta_min) / 2.0
                    } else {
                        beta / 2.0
                    };
                }
            }
            let sum_p: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum_p;
            }
            beta
        })
        .collect();

    Ok((p_cond, betas))
}

/// Symmetrized joint affinities: P_ij = (P(j|i) + P(i|j)) / (2n). Symmetric,
/// non-negative, sums to 1.
pub fn joint_affinities(x: &DenseMatrix, perplexity: f64) -> Result<Vec<f64>, EmbedError> {
    let n = x.n_rows();
    let (p_cond, _) = conditional_affinities(x, perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (p_cond[i * n + j] + p_cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    Ok(p)
}

/// Student-t affinities of a 2-D embedding. Returns (normalized Q flat n*n,
/// unnormalized kernel values). Off-diagonal kernels are strictly positive.
pub fn low_dim_affinities(y: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = k;
            total += k;
        }
    }
    let q: Vec<f64> = num.iter().map(|v| v / total).collect();
    (q, num)
}

/// KL(P||Q) over off-diagonal entries with 0*log(0) = 0. Errors where q = 0
/// under p > 0 (the Student-t construction makes that impossible for finite
/// embeddings).
pub fn kl_divergence(p: &[f64], q: &[f64], n: usize) -> Result<f64, EmbedError> {
    if p.len() != n * n || q.len() != n * n {
        return Err(EmbedError::NotSquare {
            len: p.len().min(q.len()),
            n,
        });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[i * n + j];
            if pij == 0.0 {
                continue;
            }
            let qij = q[i * n + j];
            if qij == 0.0 {
                return Err(EmbedError::ZeroAffinity { i, j });
            }
            total += pij * (pij / qij).ln();
        }
    }
    Ok(total)
}

/// Analytic gradient of KL(P||Q(y)) with respect to the embedding:
/// dC/dy_i = 4 * sum_j (p_ij - q_ij) * (y_i - y_j) / (1 + |y_i - y_j|^2).
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = y.len();
    let (q, num) = low_dim_affinities(y);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let factor = 4.0 * (p[i * n + j] - q[i * n + j]) * num[i * n + j];
                g[0] += factor * (y[i][0] - y[j][0]);
                g[1] += factor * (y[i][1] - y[j][1]);
            }
            g
        })
        .collect()
}
