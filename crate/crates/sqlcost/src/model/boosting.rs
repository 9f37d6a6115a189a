//! Gradient-boosted trees with the softmax objective and second-order
//! (gradient/hessian) split statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{FeatureSampling, GradHessCriterion, Tree, TreeBuilder};
use super::{dedup_rows, softmax, validate_training_input};
use crate::error::Result;
use crate::featurize::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 regularizer on leaf weights.
    pub lambda: f64,
    /// Minimum gain required to keep a split.
    pub gamma: f64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams {
            n_rounds: 200,
            max_depth: 6,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
        }
    }
}

/// Boosted ensemble: `rounds x classes` score trees. Class scores are
/// `base_score + learning_rate * sum of tree outputs`, probabilities
/// via softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub trees: Vec<Vec<Tree<f64>>>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub n_classes: usize,
    pub n_features: usize,
}

impl BoostedModel {
    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        let mut scores = vec![self.base_score; self.n_classes];
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                scores[k] += self.learning_rate * tree.apply(x);
            }
        }
        scores
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.scores(x))
    }
}

/// Per-round training diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoostingFit {
    /// Multiclass log-loss on the training set; entry 0 is the loss
    /// before any round.
    pub round_losses: Vec<f64>,
}

fn train_log_loss(scores: &[Vec<f64>], y: &[usize], weights: &[u32], total_weight: f64) -> f64 {
    let mut total = 0.0;
    for ((row_scores, &label), &w) in scores.iter().zip(y).zip(weights) {
        let p = softmax(row_scores);
        total -= w as f64 * p[label].max(1e-15).ln();
    }
    total / total_weight
}

/// Train a boosted model. Per round and class, gradients are
/// `p - 1[y = k]` and hessians `p (1 - p)` under softmax; leaf weights
/// and split gains are the second-order closed forms with `lambda` and
/// `gamma`.
///
/// Duplicate (features, label) rows are collapsed into weighted
/// points first; their gradient and hessian sums are identical, so the
/// fitted trees match training on the expanded rows.
pub fn train_gradient_boosting(
    x: &[SparseVector],
    y: &[usize],
    params: &BoostingParams,
    _seed: u64,
) -> Result<(BoostedModel, BoostingFit)> {
    let (n_features, n_classes) = validate_training_input(x, y)?;
    let deduped = dedup_rows(x, y);
    let (points, labels, weights) = (&deduped.points, &deduped.labels, &deduped.multiplicity);
    let m = points.len();
    let total_weight: f64 = weights.iter().map(|&w| w as f64).sum();
    let base_score = 0.0;

    let mut scores = vec![vec![base_score; n_classes]; m];
    let mut round_losses = Vec::with_capacity(params.n_rounds + 1);
    round_losses.push(train_log_loss(&scores, labels, weights, total_weight));
    let mut rounds: Vec<Vec<Tree<f64>>> = Vec::with_capacity(params.n_rounds);

    for _round in 0..params.n_rounds {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();

        let class_trees: Vec<Tree<f64>> = (0..n_classes)
            .into_par_iter()
            .map(|k| {
                let mut grad = Vec::with_capacity(m);
                let mut hess = Vec::with_capacity(m);
                for (i, p) in probs.iter().enumerate() {
                    let pk = p[k];
                    let w = weights[i] as f64;
                    grad.push(w * (pk - f64::from(labels[i] == k)));
                    hess.push(w * (pk * (1.0 - pk)).max(1e-16));
                }
                let builder = TreeBuilder {
                    data: points,
                    criterion: GradHessCriterion {
                        grad: &grad,
                        hess: &hess,
                        lambda: params.lambda,
                        gamma: params.gamma,
                    },
                    max_depth: params.max_depth,
                    n_features,
                };
                builder.build((0..m as u32).collect(), &mut FeatureSampling::All)
            })
            .collect();

        for (i, row_scores) in scores.iter_mut().enumerate() {
            for (k, tree) in class_trees.iter().enumerate() {
                row_scores[k] += params.learning_rate * tree.apply(&points[i]);
            }
        }
        round_losses.push(train_log_loss(&scores, labels, weights, total_weight));
        rounds.push(class_trees);
    }

    Ok((
        BoostedModel {
            trees: rounds,
            learning_rate: params.learning_rate,
            base_score,
            n_classes,
            n_features,
        },
        BoostingFit { round_losses },
    ))
}
