//! Model evaluation: accuracy, per-class precision/recall and
//! confusion matrices, plus the exploratory diagnostics (Pearson
//! correlation and a 2-D k-means study).

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::SparseVector;
use crate::model::Model;

/// `K x K` counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    fn col_sum(&self, col: usize) -> u64 {
        self.counts.iter().map(|row| row[col]).sum()
    }
}

/// Evaluation metrics over one labeled set. Precision of a class no
/// model ever predicts (empty column) and recall of an absent class
/// (empty row) are defined as 0 so reports stay total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub n: usize,
    pub timestamp: DateTime<Utc>,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let k = confusion.k();
        let n = confusion.total();
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        for class in 0..k {
            let col = confusion.col_sum(class);
            let row = confusion.row_sum(class);
            let hit = confusion.counts[class][class];
            precision.push(if col == 0 { 0.0 } else { hit as f64 / col as f64 });
            recall.push(if row == 0 { 0.0 } else { hit as f64 / row as f64 });
        }
        EvalReport {
            accuracy: if n == 0 {
                0.0
            } else {
                confusion.trace() as f64 / n as f64
            },
            precision,
            recall,
            confusion,
            n: n as usize,
            timestamp: Utc::now(),
        }
    }

    /// Equality on the metric content, ignoring the report timestamp.
    pub fn same_metrics(&self, other: &EvalReport) -> bool {
        self.accuracy == other.accuracy
            && self.precision == other.precision
            && self.recall == other.recall
            && self.confusion == other.confusion
            && self.n == other.n
    }
}

/// Evaluate a model against labeled feature vectors.
pub fn evaluate(model: &Model, x: &[SparseVector], y: &[usize]) -> Result<EvalReport> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let k = model.n_classes();
    let mut confusion = ConfusionMatrix::new(k);
    for (xi, &yi) in x.iter().zip(y) {
        if yi >= k {
            return Err(Error::InvariantViolation(format!(
                "label {yi} out of range for a {k}-class model"
            )));
        }
        confusion.record(yi, model.predict(xi)?);
    }
    Ok(EvalReport::from_confusion(confusion))
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Midrank ranks (average rank for ties), 1-based.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0; // average of ranks i+1..=j
        for &idx in &order[i..j] {
            out[idx] = rank;
        }
        i = j;
    }
    out
}

/// Result of a k-means run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KmeansOutcome {
    pub assignments: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    /// Total within-cluster squared distance after each iteration.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn squared_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Lloyd's algorithm with k-means++ seeding over 2-D points;
/// deterministic given the seed.
pub fn kmeans(
    points: &[[f64; 2]],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KmeansOutcome> {
    use rand::Rng;
    use rand::SeedableRng;

    if points.len() < k || k == 0 {
        return Err(Error::InsufficientPoints {
            needed: k.max(1),
            got: points.len(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<[f64; 2]> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut distances: Vec<f64> = points
        .iter()
        .map(|&p| squared_distance(p, centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = distances.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut picked = points.len() - 1;
            for (i, &d) in distances.iter().enumerate() {
                if target < d {
                    picked = i;
                    break;
                }
                target -= d;
            }
            picked
        };
        centroids.push(points[next]);
        for (i, &p) in points.iter().enumerate() {
            let d = squared_distance(p, *centroids.last().unwrap());
            if d < distances[i] {
                distances[i] = d;
            }
        }
    }

    let mut assignments = vec![0usize; points.len()];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0usize;
    for _ in 0..max_iters {
        iterations += 1;
        // assignment step
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, &p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = squared_distance(p, centroids[0]);
            for (c, &centroid) in centroids.iter().enumerate().skip(1) {
                let d = squared_distance(p, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
            inertia += best_d;
        }
        inertia_trace.push(inertia);
        if !changed && inertia_trace.len() > 1 {
            break;
        }
        // update step; empty clusters keep their previous centroid
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (i, &p) in points.iter().enumerate() {
            let c = assignments[i];
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
    }

    Ok(KmeansOutcome {
        assignments,
        centroids,
        inertia_trace,
        iterations,
    })
}
