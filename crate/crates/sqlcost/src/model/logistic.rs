//! Multinomial logistic regression trained with mini-batch gradient
//! descent on the cross-entropy loss plus an L2 penalty.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, validate_training_input};
use crate::error::Result;
use crate::featurize::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// L2 penalty strength (bias excluded).
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1e-4,
            learning_rate: 0.5,
            epochs: 30,
            batch_size: 64,
        }
    }
}

/// `K x V` weight matrix and per-class bias; probabilities via softmax
/// of the linear scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| {
                b + x
                    .entries
                    .iter()
                    .map(|&(f, v)| row[f as usize] * v)
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.scores(x))
    }
}

/// Fit diagnostics: the final full-batch training loss and whether the
/// run converged (a stalled loss with a large remaining gradient norm
/// is reported as non-convergence, which is a warning rather than an
/// error).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticFit {
    pub final_loss: f64,
    pub converged: bool,
}

/// Full-batch loss and gradient of the penalized cross-entropy at the
/// given parameters. Shared by training and by the finite-difference
/// checks.
pub fn loss_and_gradient(
    weights: &[Vec<f64>],
    bias: &[f64],
    x: &[SparseVector],
    y: &[usize],
    l2: f64,
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let k = weights.len();
    let v = weights[0].len();
    let n = x.len() as f64;
    let mut grad_w = vec![vec![0.0; v]; k];
    let mut grad_b = vec![0.0; k];
    let mut loss = 0.0;

    let model = LogisticModel {
        weights: weights.to_vec(),
        bias: bias.to_vec(),
    };
    for (xi, &yi) in x.iter().zip(y) {
        let p = model.predict_proba(xi);
        loss -= p[yi].max(1e-15).ln();
        for (class, &pk) in p.iter().enumerate() {
            let delta = pk - f64::from(class == yi);
            grad_b[class] += delta;
            for &(f, value) in &xi.entries {
                grad_w[class][f as usize] += delta * value;
            }
        }
    }
    loss /= n;
    for class in 0..k {
        grad_b[class] /= n;
        for f in 0..v {
            grad_w[class][f] /= n;
            grad_w[class][f] += l2 * weights[class][f];
            loss += 0.5 * l2 * weights[class][f] * weights[class][f];
        }
    }
    (loss, grad_w, grad_b)
}

/// Train by mini-batch gradient descent; deterministic given the seed.
pub fn train_logistic(
    x: &[SparseVector],
    y: &[usize],
    params: &LogisticParams,
    seed: u64,
) -> Result<(LogisticModel, LogisticFit)> {
    let (n_features, n_classes) = validate_training_input(x, y)?;
    let n = x.len();
    let mut weights = vec![vec![0.0; n_features]; n_classes];
    let mut bias = vec![0.0; n_classes];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch_size = params.batch_size.max(1);

    let full_loss = |weights: &[Vec<f64>], bias: &[f64]| -> f64 {
        let model = LogisticModel {
            weights: weights.to_vec(),
            bias: bias.to_vec(),
        };
        let mut loss = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            loss -= model.predict_proba(xi)[yi].max(1e-15).ln();
        }
        loss / n as f64
            + weights
                .iter()
                .flat_map(|row| row.iter().map(|w| 0.5 * params.l2 * w * w))
                .sum::<f64>()
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut prev_loss = full_loss(&weights, &bias);
    let mut last_decrease = f64::INFINITY;
    for _epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut delta_b = vec![0.0; n_classes];
            // accumulate sparse weight updates per batch
            let mut delta_w: Vec<(usize, u32, f64)> = Vec::new();
            for &i in batch {
                let p = {
                    let mut scores = vec![0.0; n_classes];
                    for (class, score) in scores.iter_mut().enumerate() {
                        *score = bias[class]
                            + x[i]
                                .entries
                                .iter()
                                .map(|&(f, v)| weights[class][f as usize] * v)
                                .sum::<f64>();
                    }
                    softmax(&scores)
                };
                for (class, &pk) in p.iter().enumerate() {
                    let d = pk - f64::from(y[i] == class);
                    delta_b[class] += d;
                    for &(f, v) in &x[i].entries {
                        delta_w.push((class, f, d * v));
                    }
                }
            }
            for class in 0..n_classes {
                bias[class] -= params.learning_rate * scale * delta_b[class];
            }
            for (class, f, d) in delta_w {
                weights[class][f as usize] -= params.learning_rate * scale * d;
            }
            // proximal step for the L2 penalty; stable for any l2
            if params.l2 > 0.0 {
                let shrink = 1.0 / (1.0 + params.learning_rate * params.l2);
                for row in weights.iter_mut() {
                    for w in row.iter_mut() {
                        *w *= shrink;
                    }
                }
            }
        }
        let loss = full_loss(&weights, &bias);
        last_decrease = prev_loss - loss;
        prev_loss = loss;
    }

    let converged = if last_decrease.abs() < 1e-6 {
        let (_, grad_w, grad_b) = loss_and_gradient(&weights, &bias, x, y, params.l2);
        let grad_norm = grad_w
            .iter()
            .flatten()
            .chain(grad_b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        grad_norm <= 1e-3
    } else {
        true
    };

    Ok((
        LogisticModel { weights, bias },
        LogisticFit {
            final_loss: prev_loss,
            converged,
        },
    ))
}
