//! CART classification trees grown greedily on Gini impurity.
//!
//! Nodes live in flat columns in pre-order. `feature[i] < 0` marks a leaf;
//! otherwise a row goes to `left[i]` when `x[feature] <= threshold[i]` and
//! to `right[i]` otherwise. `value` holds one class-fraction row per node.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::rng::Rng;
use crate::{AdepError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 12,
            min_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub classes: usize,
    pub width: usize,
    pub feature: Vec<i64>,
    pub threshold: Vec<f64>,
    pub left: Vec<i64>,
    pub right: Vec<i64>,
    /// `nodes × classes`, row-major.
    pub value: Vec<f64>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    config: TreeConfig,
    /// Per-split feature subsampling for forests.
    subsample: Option<(usize, &'a mut Rng)>,
    tree: Tree,
    /// Reused (value, label) buffer.
    column: Vec<(f64, usize)>,
}

/// `n - sum(c^2) / n`: the node's Gini impurity times its size.
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: usize = counts.iter().map(|c| c * c).sum();
    n as f64 - sq as f64 / n as f64
}

impl Builder<'_> {
    fn push_node(&mut self, counts: &[usize], n: usize) -> usize {
        let id = self.tree.feature.len();
        self.tree.feature.push(-1);
        self.tree.threshold.push(0.0);
        self.tree.left.push(-1);
        self.tree.right.push(-1);
        self.tree
            .value
            .extend(counts.iter().map(|&c| c as f64 / n as f64));
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let width = self.x.cols();
        match self.subsample.as_mut() {
            Some((count, rng)) if *count < width => {
                let mut f = sample(&mut **rng, width, *count).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..width).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize], counts: &[usize]) -> Option<Split> {
        let n = rows.len();
        let min_leaf = self.config.min_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let parent = weighted_gini(counts, n);
        let mut best: Option<Split> = None;
        let mut left = vec![0usize; self.classes];
        let mut right = vec![0usize; self.classes];
        for f in self.candidate_features() {
            self.column.clear();
            self.column
                .extend(rows.iter().map(|&r| (self.x.get(r, f), self.y[r])));
            self.column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|c| *c = 0);
            right.copy_from_slice(counts);
            let (mut sq_left, mut sq_right) = (0usize, counts.iter().map(|c| c * c).sum::<usize>());
            for p in 0..n - 1 {
                let (v, label) = self.column[p];
                sq_left += 2 * left[label] + 1;
                sq_right -= 2 * right[label] - 1;
                left[label] += 1;
                right[label] -= 1;
                let (nl, nr) = (p + 1, n - p - 1);
                let next = self.column[p + 1].0;
                if nl < min_leaf || nr < min_leaf || v == next {
                    continue;
                }
                let score = (nl as f64 - sq_left as f64 / nl as f64)
                    + (nr as f64 - sq_right as f64 / nr as f64);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some(Split {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best.filter(|b| b.score < parent - 1e-12)
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let mut counts = vec![0usize; self.classes];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        let id = self.push_node(&counts, rows.len());
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.config.max_depth {
            return id;
        }
        let Some(split) = self.best_split(rows, &counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&row| self.x.get(row, split.feature) <= split.threshold);
        self.tree.feature[id] = split.feature as i64;
        self.tree.threshold[id] = split.threshold;
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.tree.left[id] = left as i64;
        self.tree.right[id] = right as i64;
        id
    }
}

impl Tree {
    pub fn fit(x: &Matrix, y: &[usize], classes: usize, config: &TreeConfig) -> Self {
        let rows: Vec<usize> = (0..x.rows()).collect();
        Self::fit_rows(x, y, classes, config, &rows, None)
    }

    /// Grows on the given (possibly repeated) row indices; with `subsample`
    /// each split considers a fresh random subset of that many features.
    pub fn fit_rows(
        x: &Matrix,
        y: &[usize],
        classes: usize,
        config: &TreeConfig,
        rows: &[usize],
        subsample: Option<(usize, &mut Rng)>,
    ) -> Self {
        let mut b = Builder {
            x,
            y,
            classes,
            config: *config,
            subsample,
            tree: Tree {
                classes,
                width: x.cols(),
                feature: Vec::new(),
                threshold: Vec::new(),
                left: Vec::new(),
                right: Vec::new(),
                value: Vec::new(),
            },
            column: Vec::with_capacity(rows.len()),
        };
        b.grow(rows, 0);
        b.tree
    }

    pub fn node_count(&self) -> usize {
        self.feature.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, node: usize) -> usize {
            if t.feature[node] < 0 {
                0
            } else {
                1 + walk(t, t.left[node] as usize).max(walk(t, t.right[node] as usize))
            }
        }
        walk(self, 0)
    }

    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut node = 0;
        while self.feature[node] >= 0 {
            let f = self.feature[node] as usize;
            node = if row[f] <= self.threshold[node] {
                self.left[node]
            } else {
                self.right[node]
            } as usize;
        }
        node
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("tree input", self.width)?;
        let mut out = Matrix::zeros(x.rows(), self.classes);
        for i in 0..x.rows() {
            let leaf = self.leaf_of(x.row(i));
            out.row_mut(i)
                .copy_from_slice(&self.value[leaf * self.classes..(leaf + 1) * self.classes]);
        }
        Ok(out)
    }

    /// Structural checks for trees read back from disk.
    pub fn validate(&self) -> Result<()> {
        let n = self.feature.len();
        let bad = |m: String| Err(AdepError::Checkpoint(m));
        if n == 0 || [self.threshold.len(), self.left.len(), self.right.len()] != [n, n, n] {
            return bad("tree columns have inconsistent lengths".into());
        }
        if self.value.len() != n * self.classes {
            return bad("tree value column has the wrong length".into());
        }
        for i in 0..n {
            if self.feature[i] >= 0 {
                if self.feature[i] as usize >= self.width {
                    return bad(format!(
                        "node {i} splits on feature {} of {}",
                        self.feature[i], self.width
                    ));
                }
                // Pre-order layout: children always follow their parent.
                for c in [self.left[i], self.right[i]] {
                    if c <= i as i64 || c as usize >= n {
                        return bad(format!("node {i} has invalid child {c}"));
                    }
                }
            }
        }
        Ok(())
    }
}
