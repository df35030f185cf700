use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub k: usize,
    pub classes: usize,
    pub train: Matrix,
    pub labels: Vec<usize>,
}

/// Eight independent accumulators so the loop vectorizes.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    acc.iter().sum::<f64>() + tail
}

impl Knn {
    pub fn fit(x: &Matrix, y: &[usize], classes: usize, config: &KnnConfig) -> Self {
        Knn {
            k: config.k,
            classes,
            train: x.clone(),
            labels: y.to_vec(),
        }
    }

    /// Vote fractions over the `k` nearest training rows; equal distances
    /// go to the lower training index.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("knn input", self.train.cols())?;
        let k = self.k.min(self.train.rows());
        let mut out = Matrix::zeros(x.rows(), self.classes);
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(self.train.rows());
        for i in 0..x.rows() {
            let q = x.row(i);
            dist.clear();
            dist.extend(
                (0..self.train.rows()).map(|j| (squared_distance(q, self.train.row(j)), j)),
            );
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < dist.len() {
                dist.select_nth_unstable_by(k - 1, cmp);
            }
            let row = out.row_mut(i);
            for &(_, j) in &dist[..k] {
                row[self.labels[j]] += 1.0;
            }
            row.iter_mut().for_each(|v| *v /= k as f64);
        }
        Ok(out)
    }
}
