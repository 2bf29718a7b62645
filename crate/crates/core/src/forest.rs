//! From-scratch decision-tree and random-forest engine: Gini impurity,
//! bootstrap sampling, per-node feature subsampling, majority-vote
//! prediction, and mean-decrease-in-impurity feature importances.
//!
//! Training is a pure function of (data, hyperparameters, seed): every
//! tree draws from its own `SplitMix64` stream derived from the seed and
//! the tree index, so parallel training cannot change the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSchema};
use crate::ingest::App;
use crate::rng::SplitMix64;

/// Gini impurity `1 − Σ pᵢ²` of a class-count vector.
pub fn gini(counts: &[u32]) -> Result<f64> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    Ok(gini_unchecked(counts, total))
}

#[inline]
fn gini_unchecked(counts: &[u32], total: u64) -> f64 {
    let n = total as f64;
    let mut sum_sq = 0.0;
    for &c in counts {
        let p = c as f64 / n;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub column: usize,
    pub threshold: f64,
    /// Weighted impurity decrease against the parent node.
    pub decrease: f64,
}

/// Exhaustive best split over the given candidate columns: midpoint
/// thresholds between consecutive distinct sorted values, maximizing the
/// weighted Gini decrease. Ties break to the lowest column index, then the
/// lowest threshold. `None` when no split decreases impurity.
pub fn best_split(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    candidate_columns: &[usize],
) -> Option<SplitCandidate> {
    let indices: Vec<usize> = (0..rows.len()).collect();
    let mut sorted = candidate_columns.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    best_split_indexed(rows, labels, n_classes, &indices, &sorted)
}

fn best_split_indexed(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    node_rows: &[usize],
    candidate_columns: &[usize],
) -> Option<SplitCandidate> {
    let n = node_rows.len();
    if n < 2 {
        return None;
    }
    let mut parent_counts = vec![0u32; n_classes];
    for &row in node_rows {
        parent_counts[labels[row]] += 1;
    }
    let parent_gini = gini_unchecked(&parent_counts, n as u64);

    let mut best: Option<SplitCandidate> = None;
    let mut column_values: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &column in candidate_columns {
        column_values.clear();
        column_values.extend(
            node_rows
                .iter()
                .map(|&row| (rows[row][column], labels[row])),
        );
        column_values.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_counts = vec![0u32; n_classes];
        let mut right_counts = parent_counts.clone();
        for i in 0..n - 1 {
            let (value, label) = column_values[i];
            left_counts[label] += 1;
            right_counts[label] -= 1;
            let next_value = column_values[i + 1].0;
            if value == next_value {
                continue;
            }
            let threshold = (value + next_value) / 2.0;
            let n_left = (i + 1) as f64;
            let n_right = (n - i - 1) as f64;
            let decrease = parent_gini
                - (n_left / n as f64) * gini_unchecked(&left_counts, (i + 1) as u64)
                - (n_right / n as f64) * gini_unchecked(&right_counts, (n - i - 1) as u64);
            if decrease > 0.0 && best.is_none_or(|b| decrease > b.decrease) {
                best = Some(SplitCandidate {
                    column,
                    threshold,
                    decrease,
                });
            }
        }
    }
    best
}

/// A fitted tree node: either a binary split ("go left iff value ≤
/// threshold") or a leaf holding the class counts routed to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "node")]
pub enum TreeNode {
    Split {
        column: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

impl TreeNode {
    /// Majority class of the leaf this row lands in; ties break to the
    /// lowest class index.
    pub fn predict(&self, row: &[f64]) -> usize {
        match self {
            TreeNode::Split {
                column,
                threshold,
                left,
                right,
            } => {
                if row[*column] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
            TreeNode::Leaf { counts } => argmax_u32(counts),
        }
    }
}

fn argmax_u32(values: &[u32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn argmax_usize(values: &[usize]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Number of trees in the forest.
    pub trees: usize,
    /// Columns sampled per split; `None` means ⌈√(column count)⌉.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// Train each tree on a bootstrap sample of the input (on by default;
    /// turned off only for oracle-equivalence checks).
    pub bootstrap: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            trees: 100,
            max_features: None,
            min_samples_split: 2,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl Hyperparameters {
    pub fn effective_max_features(&self, n_columns: usize) -> usize {
        match self.max_features {
            Some(m) => m.clamp(1, n_columns),
            None => (n_columns as f64).sqrt().ceil() as usize,
        }
    }
}

/// The bootstrap row sample for one tree (size n, drawn with replacement).
pub fn bootstrap_sample(seed: u64, tree_index: usize, n: usize) -> Vec<usize> {
    let mut rng = SplitMix64::derive(seed, tree_index as u64);
    (0..n).map(|_| rng.below(n as u64) as usize).collect()
}

struct TreeTrainer<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [usize],
    n_classes: usize,
    n_columns: usize,
    max_features: usize,
    min_samples_split: usize,
    max_depth: Option<usize>,
    root_size: usize,
    importances: Vec<f64>,
}

impl<'a> TreeTrainer<'a> {
    fn grow(&mut self, node_rows: Vec<usize>, depth: usize, rng: &mut SplitMix64) -> TreeNode {
        let mut counts = vec![0u32; self.n_classes];
        for &row in &node_rows {
            counts[self.labels[row]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.max_depth.is_some_and(|d| depth >= d);
        if pure || node_rows.len() < self.min_samples_split || depth_capped {
            return TreeNode::Leaf { counts };
        }

        let candidates = self.sample_columns(rng);
        let Some(split) = best_split_indexed(
            self.rows,
            self.labels,
            self.n_classes,
            &node_rows,
            &candidates,
        ) else {
            return TreeNode::Leaf { counts };
        };

        self.importances[split.column] +=
            (node_rows.len() as f64 / self.root_size as f64) * split.decrease;

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = node_rows
            .into_iter()
            .partition(|&row| self.rows[row][split.column] <= split.threshold);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        TreeNode::Split {
            column: split.column,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// `max_features` distinct columns, then sorted ascending so that the
    /// lowest-index tie-break is independent of sampling order.
    fn sample_columns(&self, rng: &mut SplitMix64) -> Vec<usize> {
        if self.max_features >= self.n_columns {
            return (0..self.n_columns).collect();
        }
        let mut all: Vec<usize> = (0..self.n_columns).collect();
        for i in 0..self.max_features {
            let j = i + rng.below((self.n_columns - i) as u64) as usize;
            all.swap(i, j);
        }
        let mut picked = all[..self.max_features].to_vec();
        picked.sort_unstable();
        picked
    }
}

/// Train trees + importances over pre-encoded rows with integer labels.
/// This is the engine under [`RandomForestModel::fit`]; it is exposed for
/// direct use on toy data.
pub fn train_forest(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<(Vec<TreeNode>, Vec<f64>)> {
    if rows.is_empty() || labels.len() != rows.len() {
        return Err(Error::EmptyTrainingData);
    }
    let distinct = {
        let mut seen = vec![false; n_classes];
        for &l in labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::SingleClass);
    }
    let n_columns = rows[0].len();
    let max_features = hp.effective_max_features(n_columns);

    let per_tree: Vec<(TreeNode, Vec<f64>)> = (0..hp.trees)
        .into_par_iter()
        .map(|tree_index| {
            let sample = if hp.bootstrap {
                bootstrap_sample(seed, tree_index, rows.len())
            } else {
                (0..rows.len()).collect()
            };
            // A separate stream for growth decisions so the bootstrap
            // draw count never shifts the column sampling.
            let mut rng = SplitMix64::derive(seed ^ 0x5EED_C0DE, tree_index as u64);
            let mut trainer = TreeTrainer {
                rows,
                labels,
                n_classes,
                n_columns,
                max_features,
                min_samples_split: hp.min_samples_split.max(2),
                max_depth: hp.max_depth,
                root_size: sample.len(),
                importances: vec![0.0; n_columns],
            };
            let root = trainer.grow(sample, 0, &mut rng);
            (root, trainer.importances)
        })
        .collect();

    let mut trees = Vec::with_capacity(hp.trees);
    let mut importances = vec![0.0; n_columns];
    for (tree, tree_importances) in per_tree {
        trees.push(tree);
        for (total, part) in importances.iter_mut().zip(&tree_importances) {
            *total += part;
        }
    }
    let sum: f64 = importances.iter().sum();
    if sum > 0.0 {
        for v in &mut importances {
            *v /= sum;
        }
    }
    Ok((trees, importances))
}

/// Majority vote over the trees; returns (class index, per-class vote
/// fractions). Ties break to the lowest class index.
pub fn predict_forest(trees: &[TreeNode], row: &[f64], n_classes: usize) -> (usize, Vec<f64>) {
    let mut votes = vec![0usize; n_classes];
    for tree in trees {
        votes[tree.predict(row)] += 1;
    }
    let winner = argmax_usize(&votes);
    let fractions = votes
        .iter()
        .map(|&v| v as f64 / trees.len() as f64)
        .collect();
    (winner, fractions)
}

/// A trained ensemble bound to the schema it was encoded under. The class
/// space is the fixed application enum, in enum order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub schema: FeatureSchema,
    pub trees: Vec<TreeNode>,
    /// Normalized mean-decrease-in-impurity per column (sums to 1 when any
    /// split exists).
    pub importances: Vec<f64>,
}

impl RandomForestModel {
    pub fn fit(matrix: &FeatureMatrix, hp: &Hyperparameters, seed: u64) -> Result<Self> {
        let labels: Vec<usize> = matrix
            .labels
            .iter()
            .map(|l| l.map(App::index).ok_or(Error::EmptyTrainingData))
            .collect::<Result<_>>()?;
        let (trees, importances) = train_forest(&matrix.rows, &labels, App::ALL.len(), hp, seed)?;
        Ok(Self {
            hyperparameters: *hp,
            seed,
            schema: matrix.schema.clone(),
            trees,
            importances,
        })
    }

    pub fn predict(&self, row: &[f64]) -> Result<(App, Vec<f64>)> {
        if row.len() != self.schema.len() {
            return Err(Error::RowLengthMismatch {
                expected: self.schema.len(),
                got: row.len(),
            });
        }
        let (index, fractions) = predict_forest(&self.trees, row, App::ALL.len());
        Ok((App::from_index(index), fractions))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}
