//! Reconstruction, classification and real/fake losses with their gradients.

use super::Matrix;
use crate::{AdepError, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Gradient of `value` with respect to the loss input.
    pub grad: Matrix,
}

/// Mean absolute error over every element of the batch.
///
/// The gradient uses `sign(0) = 0`.
pub fn mae_loss(prediction: &Matrix, target: &Matrix) -> Result<LossValue> {
    prediction.expect_shape("mae_loss", target.shape())?;
    let n = prediction.data().len();
    if n == 0 {
        return Err(AdepError::dim("mae_loss", "non-empty input", "0 elements"));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(prediction.rows(), prediction.cols());
    let mut sum = 0.0;
    for ((g, p), t) in grad
        .data_mut()
        .iter_mut()
        .zip(prediction.data())
        .zip(target.data())
    {
        let r = p - t;
        sum += r.abs();
        *g = if r > 0.0 {
            inv_n
        } else if r < 0.0 {
            -inv_n
        } else {
            0.0
        };
    }
    Ok(LossValue {
        value: sum * inv_n,
        grad,
    })
}

/// Negative log-likelihood of `labels` under row-wise log-probabilities,
/// averaged over the batch. Equal to cross-entropy with one-hot targets.
pub fn nll_loss(log_probs: &Matrix, labels: &[usize]) -> Result<LossValue> {
    let (batch, classes) = log_probs.shape();
    if labels.len() != batch {
        return Err(AdepError::dim("nll_loss labels", batch, labels.len()));
    }
    if batch == 0 {
        return Err(AdepError::dim("nll_loss", "non-empty batch", 0));
    }
    for (i, row) in log_probs.iter_rows().enumerate() {
        let total: f64 = row.iter().map(|v| v.exp()).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(AdepError::Config(format!(
                "nll_loss row {i} is not a log-probability vector (sums to {total})"
            )));
        }
    }
    let inv_b = 1.0 / batch as f64;
    let mut grad = Matrix::zeros(batch, classes);
    let mut sum = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(AdepError::Label { label, classes });
        }
        sum -= log_probs.get(i, label);
        grad.set(i, label, -inv_b);
    }
    Ok(LossValue {
        value: sum * inv_b,
        grad,
    })
}

/// Binary cross-entropy of a `B × 1` probability column against 0/1 labels.
pub fn bce_loss(probabilities: &Matrix, labels: &[f64]) -> Result<LossValue> {
    let (batch, cols) = probabilities.shape();
    if cols != 1 {
        return Err(AdepError::dim("bce_loss", "1 column", cols));
    }
    if labels.len() != batch {
        return Err(AdepError::dim("bce_loss labels", batch, labels.len()));
    }
    if batch == 0 {
        return Err(AdepError::dim("bce_loss", "non-empty batch", 0));
    }
    let inv_n = 1.0 / batch as f64;
    let mut grad = Matrix::zeros(batch, 1);
    let mut sum = 0.0;
    for ((g, &raw), &y) in grad
        .data_mut()
        .iter_mut()
        .zip(probabilities.data())
        .zip(labels)
    {
        let p = raw.clamp(BCE_EPS, 1.0 - BCE_EPS);
        sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        // The clamp is flat outside the open interval.
        *g = if raw == p {
            -inv_n * (y / p - (1.0 - y) / (1.0 - p))
        } else {
            0.0
        };
    }
    Ok(LossValue {
        value: sum * inv_n,
        grad,
    })
}
