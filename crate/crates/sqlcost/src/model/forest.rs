//! Random forest classifier: bootstrap resampling per tree, Gini
//! impurity splits, and a random subset of features considered at each
//! split.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{FeatureSampling, GiniCriterion, Tree, TreeBuilder};
use super::{dedup_rows, derive_seed, validate_training_input};
use crate::error::Result;
use crate::featurize::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub feature_subsample: FeatureSubsample,
}

/// How many features each split draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    /// `sqrt(V)` features per split.
    Sqrt,
    /// Every feature at every split.
    All,
    /// A fixed number of features per split.
    Count(usize),
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 16,
            min_samples_leaf: 1,
            feature_subsample: FeatureSubsample::Sqrt,
        }
    }
}

/// Ensemble of Gini trees; prediction is the mean of the per-tree
/// class distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree<Vec<f64>>>,
    pub n_classes: usize,
    pub n_features: usize,
}

impl ForestModel {
    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.apply(x)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Train a random forest. Each tree sees a bootstrap resample of the
/// rows; determinism follows from the seed. Duplicate rows collapse
/// into weighted points, with bootstrap counts drawn over the original
/// row space and summed per point.
pub fn train_random_forest(
    x: &[SparseVector],
    y: &[usize],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    let (n_features, n_classes) = validate_training_input(x, y)?;
    let deduped = dedup_rows(x, y);
    let n = x.len();
    let m_points = deduped.points.len();
    let m_features = match params.feature_subsample {
        FeatureSubsample::Sqrt => (n_features as f64).sqrt().round().max(1.0) as usize,
        FeatureSubsample::All => n_features,
        FeatureSubsample::Count(c) => c.clamp(1, n_features),
    };

    let trees: Vec<Tree<Vec<f64>>> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let mut weights = vec![0u32; m_points];
            for _ in 0..n {
                let row = rng.random_range(0..n);
                weights[deduped.row_of[row] as usize] += 1;
            }
            let rows: Vec<u32> = (0..m_points as u32)
                .filter(|&r| weights[r as usize] > 0)
                .collect();
            let builder = TreeBuilder {
                data: &deduped.points,
                criterion: GiniCriterion {
                    labels: &deduped.labels,
                    weights: &weights,
                    n_classes,
                    min_samples_leaf: params.min_samples_leaf as f64,
                },
                max_depth: params.max_depth,
                n_features,
            };
            builder.build(
                rows,
                &mut FeatureSampling::PerSplit {
                    m: m_features,
                    rng: &mut rng,
                },
            )
        })
        .collect();

    Ok(ForestModel {
        trees,
        n_classes,
        n_features,
    })
}
