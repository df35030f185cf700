//! Multinomial logistic regression trained by full-batch gradient descent
//! on mean cross-entropy plus `l2 / 2 * ||W||^2`.
//!
//! Features are standardized internally (constant columns keep scale 1).
//! The step is `min(lr, 1 / L)` where `L` bounds the loss curvature,
//! `0.5 * (lambda_max(X^T X / n) + 1) + l2` (the `+ 1` covers the bias
//! column), with the eigenvalue estimated by power iteration.

use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub lr: f64,
    pub l2: f64,
    pub iterations: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            lr: 0.1,
            l2: 1e-4,
            iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogReg {
    /// `classes × features`, acting on standardized inputs.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

const POWER_ITERATIONS: usize = 30;

fn standardize(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - mean[j]) / scale[j];
        }
    }
    out
}

fn softmax_rows(logits: &mut Matrix) {
    for i in 0..logits.rows() {
        let row = logits.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Largest eigenvalue of `X^T X / n`, from a fixed all-ones start.
fn gram_spectral_radius(x: &Matrix) -> f64 {
    let n = x.rows() as f64;
    let mut v = vec![1.0 / (x.cols() as f64).sqrt(); x.cols()];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let xv: Vec<f64> = (0..x.rows())
            .map(|i| x.row(i).iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let mut w = vec![0.0; x.cols()];
        for (i, &s) in xv.iter().enumerate() {
            for (wj, xj) in w.iter_mut().zip(x.row(i)) {
                *wj += s * xj / n;
            }
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w.into_iter().map(|a| a / norm).collect();
    }
    lambda
}

impl LogReg {
    pub fn fit(x: &Matrix, y: &[usize], classes: usize, config: &LogRegConfig) -> Result<Self> {
        let (n, d) = x.shape();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            mean.iter_mut()
                .zip(x.row(i))
                .for_each(|(m, v)| *m += v / n as f64);
        }
        let mut var = vec![0.0; d];
        for i in 0..n {
            for (j, v) in x.row(i).iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]) / n as f64;
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|&v| if v > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        let xs = standardize(x, &mean, &scale);
        let curvature = 0.5 * (gram_spectral_radius(&xs) + 1.0) + config.l2;
        let step = config.lr.min(1.0 / curvature);

        let mut weight = Matrix::zeros(classes, d);
        let mut bias = vec![0.0; classes];
        for _ in 0..config.iterations {
            let mut p = xs.matmul_nt(&weight)?;
            for i in 0..n {
                p.row_mut(i)
                    .iter_mut()
                    .zip(&bias)
                    .for_each(|(v, b)| *v += b);
            }
            softmax_rows(&mut p);
            // p becomes (softmax - onehot) / n.
            for (i, &label) in y.iter().enumerate() {
                p.row_mut(i)[label] -= 1.0;
            }
            p.scale(1.0 / n as f64);
            let mut grad_w = Matrix::zeros(classes, d);
            p.matmul_tn_acc(&xs, grad_w.data_mut())?;
            let mut grad_b = vec![0.0; classes];
            for i in 0..n {
                grad_b.iter_mut().zip(p.row(i)).for_each(|(g, v)| *g += v);
            }
            for (w, g) in weight.data_mut().iter_mut().zip(grad_w.data()) {
                *w -= step * (g + config.l2 * *w);
            }
            bias.iter_mut()
                .zip(&grad_b)
                .for_each(|(b, g)| *b -= step * g);
        }
        Ok(LogReg {
            weight,
            bias,
            mean,
            scale,
        })
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("logistic regression input", self.weight.cols())?;
        let xs = standardize(x, &self.mean, &self.scale);
        let mut p = xs.matmul_nt(&self.weight)?;
        for i in 0..p.rows() {
            p.row_mut(i)
                .iter_mut()
                .zip(&self.bias)
                .for_each(|(v, b)| *v += b);
        }
        softmax_rows(&mut p);
        Ok(p)
    }
}
