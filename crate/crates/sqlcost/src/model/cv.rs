//! Stratified k-fold cross-validation for hyperparameter selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, train_gradient_boosting, train_logistic, train_random_forest, Hyperparameters,
    Model,
};
use crate::error::{Error, Result};
use crate::featurize::SparseVector;

/// Per-fit diagnostics that some trainers emit.
#[derive(Debug, Clone)]
pub enum FitDetail {
    None,
    Boosting(super::boosting::BoostingFit),
    Logistic(super::LogisticFit),
}

impl FitDetail {
    /// Final training loss, when the trainer reports one.
    pub fn final_loss(&self) -> Option<f64> {
        match self {
            FitDetail::None => None,
            FitDetail::Boosting(fit) => fit.round_losses.last().copied(),
            FitDetail::Logistic(fit) => Some(fit.final_loss),
        }
    }
}

/// Train one model with the given hyperparameters, keeping the
/// trainer's diagnostics.
pub fn train_model_with_detail(
    x: &[SparseVector],
    y: &[usize],
    hp: &Hyperparameters,
    seed: u64,
) -> Result<(Model, FitDetail)> {
    Ok(match hp {
        Hyperparameters::Rf(p) => (Model::Rf(train_random_forest(x, y, p, seed)?), FitDetail::None),
        Hyperparameters::Gbt(p) => {
            let (model, fit) = train_gradient_boosting(x, y, p, seed)?;
            (Model::Gbt(model), FitDetail::Boosting(fit))
        }
        Hyperparameters::Logreg(p) => {
            let (model, fit) = train_logistic(x, y, p, seed)?;
            (Model::Logreg(model), FitDetail::Logistic(fit))
        }
    })
}

/// Train one model, discarding fit diagnostics.
pub fn train_model(
    x: &[SparseVector],
    y: &[usize],
    hp: &Hyperparameters,
    seed: u64,
) -> Result<Model> {
    train_model_with_detail(x, y, hp, seed).map(|(model, _)| model)
}

/// Deal rows into `k` folds, stratified so every fold carries every
/// class. Errors if any class has fewer than `k` examples.
pub fn stratified_folds(y: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    if k < 2 {
        return Err(Error::Config(format!("need k >= 2 folds, got {k}")));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); n_classes];
    for (i, &label) in y.iter().enumerate() {
        by_class[label].push(i as u32);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::InsufficientData(format!(
                "class {c} has {} examples; stratified {k}-folding impossible",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<u32>> = vec![Vec::new(); k];
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for (i, &row) in members.iter().enumerate() {
            folds[i % k].push(row);
        }
    }
    for fold in folds.iter_mut() {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Outcome of a grid search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub best_index: usize,
    pub best: Hyperparameters,
    /// Mean validation accuracy per grid candidate, in grid order.
    pub candidate_mean_accuracy: Vec<f64>,
    pub folds: usize,
}

/// Evaluate every grid candidate with stratified k-fold validation and
/// pick the highest mean accuracy (earliest grid position on ties).
pub fn cross_validate(
    x: &[SparseVector],
    y: &[usize],
    k: usize,
    grid: &[Hyperparameters],
    seed: u64,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".to_string()));
    }
    let folds = stratified_folds(y, k, derive_seed(seed, 0xF01D))?;

    // fold -> (train rows, validation rows)
    let splits: Vec<(Vec<u32>, &[u32])> = (0..k)
        .map(|f| {
            let mut train_rows = Vec::with_capacity(y.len() - folds[f].len());
            for (other, fold) in folds.iter().enumerate() {
                if other != f {
                    train_rows.extend_from_slice(fold);
                }
            }
            (train_rows, folds[f].as_slice())
        })
        .collect();

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..k).map(move |f| (c, f)))
        .collect();
    let accuracies: Vec<((usize, usize), f64)> = tasks
        .into_par_iter()
        .map(|(c, f)| {
            let (train_rows, valid_rows) = &splits[f];
            let x_train: Vec<SparseVector> =
                train_rows.iter().map(|&r| x[r as usize].clone()).collect();
            let y_train: Vec<usize> = train_rows.iter().map(|&r| y[r as usize]).collect();
            let model = train_model(
                &x_train,
                &y_train,
                &grid[c],
                derive_seed(seed, (c as u64) << 8 | f as u64),
            )?;
            let correct = valid_rows
                .iter()
                .filter(|&&r| model.predict(&x[r as usize]).map(|p| p == y[r as usize]).unwrap_or(false))
                .count();
            Ok(((c, f), correct as f64 / valid_rows.len() as f64))
        })
        .collect::<Result<_>>()?;

    let mut candidate_mean_accuracy = vec![0.0; grid.len()];
    for ((c, _), acc) in accuracies {
        candidate_mean_accuracy[c] += acc / k as f64;
    }
    let mut best_index = 0usize;
    for (c, &acc) in candidate_mean_accuracy.iter().enumerate() {
        if acc > candidate_mean_accuracy[best_index] {
            best_index = c;
        }
    }
    Ok(CvReport {
        best_index,
        best: grid[best_index].clone(),
        candidate_mean_accuracy,
        folds: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForestParams, LogisticParams};

    fn dense(values: &[f64]) -> SparseVector {
        SparseVector {
            dimension: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, *v))
                .collect(),
        }
    }

    #[test]
    fn nine_balanced_examples_fold_one_per_class() {
        let y = vec![0usize, 0, 0, 1, 1, 1, 2, 2, 2];
        let folds = stratified_folds(&y, 3, 1).unwrap();
        for fold in &folds {
            assert_eq!(fold.len(), 3);
            let mut classes: Vec<usize> = fold.iter().map(|&r| y[r as usize]).collect();
            classes.sort_unstable();
            assert_eq!(classes, vec![0, 1, 2]);
        }
    }

    #[test]
    fn folds_partition_rows() {
        let y: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let folds = stratified_folds(&y, 3, 7).unwrap();
        let mut all: Vec<u32> = folds.concat();
        all.sort_unstable();
        let expected: Vec<u32> = (0..50).collect();
        assert_eq!(all, expected);
    }

    #[test]
    fn small_class_is_rejected() {
        let y = vec![0usize, 0, 0, 1, 1, 2]; // class 2 has one member
        assert!(matches!(
            stratified_folds(&y, 3, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn single_candidate_grid_returns_it() {
        let x: Vec<SparseVector> = (0..30)
            .map(|i| dense(&[(i % 6) as f64]))
            .collect();
        let y: Vec<usize> = (0..30).map(|i| (i % 6 >= 3) as usize).collect();
        let grid = vec![Hyperparameters::Logreg(LogisticParams::default())];
        let report = cross_validate(&x, &y, 3, &grid, 11).unwrap();
        assert_eq!(report.best_index, 0);
        assert_eq!(report.candidate_mean_accuracy.len(), 1);
    }

    #[test]
    fn dominant_candidate_wins() {
        // Class is determined by feature 0; a 1-tree stump forest
        // cannot do better than a larger forest, but a forest with
        // enough depth should dominate a deliberately crippled one.
        let x: Vec<SparseVector> = (0..60)
            .map(|i| dense(&[(i % 4) as f64, ((i * 13) % 7) as f64]))
            .collect();
        let y: Vec<usize> = (0..60).map(|i| ((i % 4) >= 2) as usize).collect();
        let weak = Hyperparameters::Rf(ForestParams {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 30,
            feature_subsample: super::super::forest::FeatureSubsample::Count(1),
        });
        let strong = Hyperparameters::Rf(ForestParams {
            n_trees: 20,
            max_depth: 6,
            min_samples_leaf: 1,
            feature_subsample: super::super::forest::FeatureSubsample::All,
        });
        let report = cross_validate(&x, &y, 3, &[weak, strong.clone()], 5).unwrap();
        assert_eq!(report.best_index, 1);
        assert_eq!(report.best, strong);
        assert!(
            report.candidate_mean_accuracy[1] > report.candidate_mean_accuracy[0],
            "{:?}",
            report.candidate_mean_accuracy
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<SparseVector> = (0..24)
            .map(|i| dense(&[(i % 4) as f64]))
            .collect();
        let y: Vec<usize> = (0..24).map(|i| (i % 4 >= 2) as usize).collect();
        let grid = vec![
            Hyperparameters::Logreg(LogisticParams::default()),
            Hyperparameters::Logreg(LogisticParams {
                epochs: 2,
                ..LogisticParams::default()
            }),
        ];
        let a = cross_validate(&x, &y, 3, &grid, 21).unwrap();
        let b = cross_validate(&x, &y, 3, &grid, 21).unwrap();
        assert_eq!(a.best_index, b.best_index);
        assert_eq!(a.candidate_mean_accuracy, b.candidate_mean_accuracy);
    }
}
