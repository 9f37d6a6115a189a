//! Sparse-aware decision trees shared by the forest and boosting
//! trainers.
//!
//! Split finding enumerates the observed values of each feature within
//! a node; absent entries are treated as value 0. Thresholds are
//! midpoints between consecutive distinct values and rows follow
//! `value < threshold` to the left child.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurize::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode<L> {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: L,
    },
}

/// A binary decision tree stored as a flat node array (root at 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<TreeNode<L>>,
}

impl<L> Tree<L> {
    pub fn leaf(value: L) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    /// Walk the tree for one input and return the reached leaf value.
    pub fn apply(&self, x: &SparseVector) -> &L {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature) < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Node statistics and leaf construction for a split objective.
pub(crate) trait Criterion {
    type Stats: Clone;
    type Leaf: Clone;

    fn empty(&self) -> Self::Stats;
    fn accumulate(&self, stats: &mut Self::Stats, row: u32);
    fn add(&self, a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    fn subtract(&self, a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    /// Weighted number of samples behind the stats.
    fn count(&self, stats: &Self::Stats) -> f64;
    /// Improvement of splitting `parent` into `left`/`right`; splits
    /// with non-positive gain are rejected.
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> f64;
    fn leaf(&self, stats: &Self::Stats) -> Self::Leaf;
    /// Nothing left to separate; grow no further.
    fn is_pure(&self, stats: &Self::Stats) -> bool;
}

/// Gini-impurity criterion over weighted class counts (bootstrap
/// multiplicities enter through `weights`).
pub(crate) struct GiniCriterion<'a> {
    pub labels: &'a [usize],
    pub weights: &'a [u32],
    pub n_classes: usize,
    pub min_samples_leaf: f64,
}

#[derive(Clone)]
pub(crate) struct ClassCounts {
    pub counts: Vec<f64>,
    pub total: f64,
}

fn gini_impurity(counts: &ClassCounts) -> f64 {
    if counts.total <= 0.0 {
        return 0.0;
    }
    let mut sum_sq = 0.0;
    for &c in &counts.counts {
        let p = c / counts.total;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

impl Criterion for GiniCriterion<'_> {
    type Stats = ClassCounts;
    type Leaf = Vec<f64>;

    fn empty(&self) -> ClassCounts {
        ClassCounts {
            counts: vec![0.0; self.n_classes],
            total: 0.0,
        }
    }

    fn accumulate(&self, stats: &mut ClassCounts, row: u32) {
        let w = self.weights[row as usize] as f64;
        stats.counts[self.labels[row as usize]] += w;
        stats.total += w;
    }

    fn add(&self, a: &ClassCounts, b: &ClassCounts) -> ClassCounts {
        ClassCounts {
            counts: a
                .counts
                .iter()
                .zip(&b.counts)
                .map(|(x, y)| x + y)
                .collect(),
            total: a.total + b.total,
        }
    }

    fn subtract(&self, a: &ClassCounts, b: &ClassCounts) -> ClassCounts {
        ClassCounts {
            counts: a
                .counts
                .iter()
                .zip(&b.counts)
                .map(|(x, y)| x - y)
                .collect(),
            total: a.total - b.total,
        }
    }

    fn count(&self, stats: &ClassCounts) -> f64 {
        stats.total
    }

    fn gain(&self, parent: &ClassCounts, left: &ClassCounts, right: &ClassCounts) -> f64 {
        if left.total < self.min_samples_leaf || right.total < self.min_samples_leaf {
            return f64::NEG_INFINITY;
        }
        let weighted_child = (left.total * gini_impurity(left)
            + right.total * gini_impurity(right))
            / parent.total;
        gini_impurity(parent) - weighted_child
    }

    fn leaf(&self, stats: &ClassCounts) -> Vec<f64> {
        if stats.total <= 0.0 {
            return vec![1.0 / self.n_classes as f64; self.n_classes];
        }
        stats.counts.iter().map(|&c| c / stats.total).collect()
    }

    fn is_pure(&self, stats: &ClassCounts) -> bool {
        stats.counts.iter().filter(|&&c| c > 0.0).count() <= 1
    }
}

/// Second-order boosting criterion over gradient/hessian sums. The
/// leaf weight is `-G / (H + lambda)` and the split gain is
/// `0.5 * [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma`.
pub(crate) struct GradHessCriterion<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Clone)]
pub(crate) struct GradHess {
    pub g: f64,
    pub h: f64,
    pub n: f64,
}

impl Criterion for GradHessCriterion<'_> {
    type Stats = GradHess;
    type Leaf = f64;

    fn empty(&self) -> GradHess {
        GradHess {
            g: 0.0,
            h: 0.0,
            n: 0.0,
        }
    }

    fn accumulate(&self, stats: &mut GradHess, row: u32) {
        stats.g += self.grad[row as usize];
        stats.h += self.hess[row as usize];
        stats.n += 1.0;
    }

    fn add(&self, a: &GradHess, b: &GradHess) -> GradHess {
        GradHess {
            g: a.g + b.g,
            h: a.h + b.h,
            n: a.n + b.n,
        }
    }

    fn subtract(&self, a: &GradHess, b: &GradHess) -> GradHess {
        GradHess {
            g: a.g - b.g,
            h: a.h - b.h,
            n: a.n - b.n,
        }
    }

    fn count(&self, stats: &GradHess) -> f64 {
        stats.n
    }

    fn gain(&self, parent: &GradHess, left: &GradHess, right: &GradHess) -> f64 {
        if left.n < 1.0 || right.n < 1.0 {
            return f64::NEG_INFINITY;
        }
        let score = |s: &GradHess| s.g * s.g / (s.h + self.lambda);
        0.5 * (score(left) + score(right) - score(parent)) - self.gamma
    }

    fn leaf(&self, stats: &GradHess) -> f64 {
        -stats.g / (stats.h + self.lambda)
    }

    fn is_pure(&self, _stats: &GradHess) -> bool {
        false
    }
}

/// Per-split feature sampling for the forest; boosting considers every
/// feature.
pub(crate) enum FeatureSampling<'a> {
    All,
    PerSplit { m: usize, rng: &'a mut ChaCha8Rng },
}

/// Reusable buffers for one tree build.
pub(crate) struct Scratch {
    counts: Vec<u32>,
    offsets: Vec<u32>,
    values: Vec<f64>,
    rows: Vec<u32>,
    order: Vec<u32>,
}

impl Scratch {
    pub fn new(n_features: usize) -> Self {
        Scratch {
            counts: vec![0; n_features],
            offsets: vec![0; n_features + 1],
            values: Vec::new(),
            rows: Vec::new(),
            order: Vec::new(),
        }
    }
}

struct BestSplit {
    feature: u32,
    threshold: f64,
    gain: f64,
}

pub(crate) struct TreeBuilder<'a, C: Criterion> {
    pub data: &'a [SparseVector],
    pub criterion: C,
    pub max_depth: usize,
    pub n_features: usize,
}

impl<C: Criterion> TreeBuilder<'_, C> {
    pub fn build(&self, rows: Vec<u32>, sampling: &mut FeatureSampling) -> Tree<C::Leaf> {
        let mut nodes = Vec::new();
        let mut scratch = Scratch::new(self.n_features);
        self.grow(&mut nodes, rows, 0, sampling, &mut scratch);
        Tree { nodes }
    }

    fn grow(
        &self,
        nodes: &mut Vec<TreeNode<C::Leaf>>,
        rows: Vec<u32>,
        depth: usize,
        sampling: &mut FeatureSampling,
        scratch: &mut Scratch,
    ) -> u32 {
        let mut stats = self.criterion.empty();
        for &r in &rows {
            self.criterion.accumulate(&mut stats, r);
        }

        let make_leaf = |nodes: &mut Vec<TreeNode<C::Leaf>>, stats: &C::Stats| -> u32 {
            nodes.push(TreeNode::Leaf {
                value: self.criterion.leaf(stats),
            });
            (nodes.len() - 1) as u32
        };

        if depth >= self.max_depth || rows.len() < 2 || self.criterion.is_pure(&stats) {
            return make_leaf(nodes, &stats);
        }

        let best = self.find_best_split(&rows, &stats, sampling, scratch);
        let Some(best) = best else {
            return make_leaf(nodes, &stats);
        };

        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .into_iter()
            .partition(|&r| self.data[r as usize].get(best.feature) < best.threshold);
        if left_rows.is_empty() || right_rows.is_empty() {
            return make_leaf(nodes, &stats);
        }

        let index = nodes.len() as u32;
        nodes.push(TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(nodes, left_rows, depth + 1, sampling, scratch);
        let right = self.grow(nodes, right_rows, depth + 1, sampling, scratch);
        if let TreeNode::Split {
            left: l, right: r, ..
        } = &mut nodes[index as usize]
        {
            *l = left;
            *r = right;
        }
        index
    }

    fn find_best_split(
        &self,
        rows: &[u32],
        node_stats: &C::Stats,
        sampling: &mut FeatureSampling,
        scratch: &mut Scratch,
    ) -> Option<BestSplit> {
        // Bucket the node's nonzero entries by feature.
        scratch.counts.iter_mut().for_each(|c| *c = 0);
        let mut nnz = 0usize;
        for &r in rows {
            for &(f, v) in &self.data[r as usize].entries {
                if v != 0.0 {
                    scratch.counts[f as usize] += 1;
                    nnz += 1;
                }
            }
        }
        scratch.offsets[0] = 0;
        for f in 0..self.n_features {
            scratch.offsets[f + 1] = scratch.offsets[f] + scratch.counts[f];
        }
        scratch.values.resize(nnz, 0.0);
        scratch.rows.resize(nnz, 0);
        let mut fill = std::mem::take(&mut scratch.counts);
        fill.iter_mut().for_each(|c| *c = 0);
        for &r in rows {
            for &(f, v) in &self.data[r as usize].entries {
                if v != 0.0 {
                    let slot = (scratch.offsets[f as usize] + fill[f as usize]) as usize;
                    scratch.values[slot] = v;
                    scratch.rows[slot] = r;
                    fill[f as usize] += 1;
                }
            }
        }
        scratch.counts = fill;

        let candidates: Vec<u32> = match sampling {
            FeatureSampling::All => (0..self.n_features as u32).collect(),
            FeatureSampling::PerSplit { m, rng } => {
                let m = (*m).clamp(1, self.n_features);
                let mut picked: Vec<u32> = sample(rng, self.n_features, m)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect();
                picked.sort_unstable();
                picked
            }
        };

        let mut best: Option<BestSplit> = None;
        for f in candidates {
            let lo = scratch.offsets[f as usize] as usize;
            let hi = scratch.offsets[f as usize + 1] as usize;
            if lo == hi && self.criterion.count(node_stats) > 0.0 {
                // Feature constant (all zero) within the node.
                continue;
            }
            // Sort this feature's entries by value.
            scratch.order.clear();
            scratch.order.extend(lo as u32..hi as u32);
            scratch.order.sort_unstable_by(|&a, &b| {
                scratch.values[a as usize]
                    .partial_cmp(&scratch.values[b as usize])
                    .unwrap()
            });

            let mut nonzero = self.criterion.empty();
            for &slot in scratch.order.iter() {
                self.criterion
                    .accumulate(&mut nonzero, scratch.rows[slot as usize]);
            }
            let zero_group = self.criterion.subtract(node_stats, &nonzero);
            let zero_count = self.criterion.count(&zero_group);

            // Sweep distinct value groups in ascending order, with the
            // implicit zero group placed between negatives and
            // positives.
            let mut left = self.criterion.empty();
            let mut prev_value: Option<f64> = None;
            let mut zero_pending = zero_count > 0.0;
            let evaluate = |left: &C::Stats,
                                prev: f64,
                                next: f64,
                                best: &mut Option<BestSplit>| {
                let threshold = prev + (next - prev) / 2.0;
                if threshold <= prev || threshold > next {
                    return;
                }
                let right = self.criterion.subtract(node_stats, left);
                let gain = self.criterion.gain(node_stats, left, &right);
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    *best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            };

            let mut i = 0usize;
            while i < scratch.order.len() {
                let slot = scratch.order[i] as usize;
                let value = scratch.values[slot];
                if zero_pending && value > 0.0 {
                    if let Some(prev) = prev_value {
                        evaluate(&left, prev, 0.0, &mut best);
                    }
                    left = self.criterion.add(&left, &zero_group);
                    prev_value = Some(0.0);
                    zero_pending = false;
                }
                if let Some(prev) = prev_value {
                    if value > prev {
                        evaluate(&left, prev, value, &mut best);
                    }
                }
                // absorb the whole group of equal values
                let mut j = i;
                while j < scratch.order.len()
                    && scratch.values[scratch.order[j] as usize] == value
                {
                    self.criterion
                        .accumulate(&mut left, scratch.rows[scratch.order[j] as usize]);
                    j += 1;
                }
                prev_value = Some(value);
                i = j;
            }
            if zero_pending {
                if let Some(prev) = prev_value {
                    // zero group is the last group (all values negative)
                    evaluate(&left, prev, 0.0, &mut best);
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

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

    /// Independent traversal oracle: follow splits by re-reading the
    /// node array directly.
    fn walk_oracle<'t, L>(tree: &'t Tree<L>, x: &SparseVector) -> &'t L {
        let mut at = 0usize;
        for _ in 0..tree.nodes.len() + 1 {
            match &tree.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = x
                        .entries
                        .iter()
                        .find(|(f, _)| *f == *feature)
                        .map(|(_, v)| *v)
                        .unwrap_or(0.0);
                    at = if v < *threshold { *left as usize } else { *right as usize };
                }
            }
        }
        unreachable!("cycle in tree");
    }

    #[test]
    fn gini_tree_separates_two_classes() {
        let data: Vec<SparseVector> = [[1.0, 0.0], [2.0, 0.0], [5.0, 0.0], [6.0, 0.0]]
            .iter()
            .map(|v| dense(v))
            .collect();
        let labels = vec![0usize, 0, 1, 1];
        let weights = vec![1u32; 4];
        let builder = TreeBuilder {
            data: &data,
            criterion: GiniCriterion {
                labels: &labels,
                weights: &weights,
                n_classes: 2,
                min_samples_leaf: 1.0,
            },
            max_depth: 2,
            n_features: 2,
        };
        let tree = builder.build(vec![0, 1, 2, 3], &mut FeatureSampling::All);
        for (i, x) in data.iter().enumerate() {
            let dist = tree.apply(x);
            let predicted = if dist[0] >= dist[1] { 0 } else { 1 };
            assert_eq!(predicted, labels[i]);
        }
        // threshold sits between the observed values 2 and 5
        match &tree.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 2.0 && *threshold <= 5.0);
            }
            other => panic!("expected root split, got {other:?}"),
        }
    }

    #[test]
    fn zero_entries_act_as_value_zero() {
        // Feature 0 is absent (=0) for class 0 and positive for class 1.
        let data = vec![
            dense(&[0.0]),
            dense(&[0.0]),
            dense(&[3.0]),
            dense(&[4.0]),
        ];
        let labels = vec![0usize, 0, 1, 1];
        let weights = vec![1u32; 4];
        let builder = TreeBuilder {
            data: &data,
            criterion: GiniCriterion {
                labels: &labels,
                weights: &weights,
                n_classes: 2,
                min_samples_leaf: 1.0,
            },
            max_depth: 3,
            n_features: 1,
        };
        let tree = builder.build(vec![0, 1, 2, 3], &mut FeatureSampling::All);
        assert_eq!(tree.apply(&dense(&[0.0]))[0], 1.0);
        assert_eq!(tree.apply(&dense(&[3.5]))[1], 1.0);
    }

    #[test]
    fn grad_hess_leaf_weight() {
        let data = vec![dense(&[1.0])];
        let grad = vec![0.4];
        let hess = vec![0.24];
        let lambda = 1.0;
        let builder = TreeBuilder {
            data: &data,
            criterion: GradHessCriterion {
                grad: &grad,
                hess: &hess,
                lambda,
                gamma: 0.0,
            },
            max_depth: 3,
            n_features: 1,
        };
        let tree = builder.build(vec![0], &mut FeatureSampling::All);
        let w = tree.apply(&data[0]);
        assert!((w - (-0.4 / (0.24 + lambda))).abs() < 1e-12);
    }

    #[test]
    fn traversal_matches_walk_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<SparseVector> = (0..60)
            .map(|i| {
                dense(&[
                    (i % 7) as f64,
                    if i % 3 == 0 { 0.0 } else { (i % 5) as f64 },
                    (i % 2) as f64,
                ])
            })
            .collect();
        let labels: Vec<usize> = (0..60).map(|i| (i / 20) as usize).collect();
        let weights = vec![1u32; 60];
        let builder = TreeBuilder {
            data: &data,
            criterion: GiniCriterion {
                labels: &labels,
                weights: &weights,
                n_classes: 3,
                min_samples_leaf: 1.0,
            },
            max_depth: 6,
            n_features: 3,
        };
        let tree = builder.build(
            (0..60).collect(),
            &mut FeatureSampling::PerSplit { m: 2, rng: &mut rng },
        );
        for x in &data {
            assert_eq!(tree.apply(x), walk_oracle(&tree, x));
        }
    }

    #[test]
    fn non_positive_gain_rejected_with_gamma() {
        // One strong split exists; with a huge gamma it must be refused.
        let data = vec![dense(&[1.0]), dense(&[5.0])];
        let grad = vec![1.0, -1.0];
        let hess = vec![0.5, 0.5];
        let builder = TreeBuilder {
            data: &data,
            criterion: GradHessCriterion {
                grad: &grad,
                hess: &hess,
                lambda: 1.0,
                gamma: 1e9,
            },
            max_depth: 3,
            n_features: 1,
        };
        let tree = builder.build(vec![0, 1], &mut FeatureSampling::All);
        assert_eq!(tree.nodes.len(), 1, "expected a bare leaf");
    }
}
