//! Multiclass classifiers over sparse bag-of-words features: random
//! forest, second-order gradient boosting, and multinomial logistic
//! regression, plus stratified k-fold cross-validation.

pub mod boosting;
pub mod cv;
pub mod forest;
pub mod logistic;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::SparseVector;

pub use boosting::{train_gradient_boosting, BoostedModel, BoostingParams};
pub use cv::{cross_validate, stratified_folds, CvReport};
pub use forest::{train_random_forest, ForestModel, ForestParams};
pub use logistic::{loss_and_gradient, train_logistic, LogisticFit, LogisticModel, LogisticParams};
pub use tree::{Tree, TreeNode};

/// Which classifier family a model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Gbt,
    Logreg,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::Logreg => "logreg",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(ModelKind::Rf),
            "gbt" => Ok(ModelKind::Gbt),
            "logreg" => Ok(ModelKind::Logreg),
            other => Err(Error::Config(format!(
                "unknown model kind `{other}` (expected rf, gbt or logreg)"
            ))),
        }
    }
}

/// Model-specific training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Hyperparameters {
    Rf(ForestParams),
    Gbt(BoostingParams),
    Logreg(LogisticParams),
}

impl Hyperparameters {
    pub fn defaults_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Rf => Hyperparameters::Rf(ForestParams::default()),
            ModelKind::Gbt => Hyperparameters::Gbt(BoostingParams::default()),
            ModelKind::Logreg => Hyperparameters::Logreg(LogisticParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Rf(_) => ModelKind::Rf,
            Hyperparameters::Gbt(_) => ModelKind::Gbt,
            Hyperparameters::Logreg(_) => ModelKind::Logreg,
        }
    }
}

/// A trained multiclass classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Rf(ForestModel),
    Gbt(BoostedModel),
    Logreg(LogisticModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Rf(_) => ModelKind::Rf,
            Model::Gbt(_) => ModelKind::Gbt,
            Model::Logreg(_) => ModelKind::Logreg,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Rf(m) => m.n_classes,
            Model::Gbt(m) => m.n_classes,
            Model::Logreg(m) => m.n_classes(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Model::Rf(m) => m.n_features,
            Model::Gbt(m) => m.n_features,
            Model::Logreg(m) => m.n_features(),
        }
    }

    /// Class probabilities for one input; non-negative and summing
    /// to 1.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dimension != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: x.dimension,
            });
        }
        Ok(match self {
            Model::Rf(m) => m.predict_proba(x),
            Model::Gbt(m) => m.predict_proba(x),
            Model::Logreg(m) => m.predict_proba(x),
        })
    }

    /// Argmax class, ties broken toward the lower index.
    pub fn predict(&self, x: &SparseVector) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

/// Index of the largest value, first occurrence winning ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Checks shared by every trainer: non-empty, aligned, and more than
/// one class present.
pub(crate) fn validate_training_input(
    x: &[SparseVector],
    y: &[usize],
) -> Result<(usize, usize)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::DegenerateData("empty training set".to_string()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let dimension = x[0].dimension;
    if x.iter().any(|v| v.dimension != dimension) {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            actual: x.iter().find(|v| v.dimension != dimension).unwrap().dimension,
        });
    }
    let n_classes = y.iter().max().copied().unwrap_or(0) + 1;
    let first = y[0];
    if y.iter().all(|&label| label == first) {
        return Err(Error::DegenerateData(
            "all labels identical; nothing to learn".to_string(),
        ));
    }
    Ok((dimension, n_classes.max(2)))
}

/// Collapse duplicate (features, label) rows into distinct points with
/// multiplicities. Tree trainers aggregate weighted statistics, so
/// training on the collapsed set is exact while synthetic template
/// workloads shrink by orders of magnitude.
pub(crate) struct DedupedRows {
    pub points: Vec<SparseVector>,
    pub labels: Vec<usize>,
    /// Multiplicity of each distinct point.
    pub multiplicity: Vec<u32>,
    /// Original row index -> distinct point index.
    pub row_of: Vec<u32>,
}

pub(crate) fn dedup_rows(x: &[SparseVector], y: &[usize]) -> DedupedRows {
    use std::collections::HashMap;
    let mut index: HashMap<(usize, Vec<(u32, u64)>), u32> = HashMap::new();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut multiplicity: Vec<u32> = Vec::new();
    let mut row_of = Vec::with_capacity(x.len());
    for (xi, &yi) in x.iter().zip(y) {
        let key = (
            yi,
            xi.entries
                .iter()
                .map(|&(f, v)| (f, v.to_bits()))
                .collect::<Vec<_>>(),
        );
        let next = points.len() as u32;
        let id = *index.entry(key).or_insert_with(|| {
            points.push(xi.clone());
            labels.push(yi);
            multiplicity.push(0);
            next
        });
        multiplicity[id as usize] += 1;
        row_of.push(id);
    }
    DedupedRows {
        points,
        labels,
        multiplicity,
        row_of,
    }
}

/// Derive an independent stream seed from a master seed, mixing the
/// stream index with splitmix64.
pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
