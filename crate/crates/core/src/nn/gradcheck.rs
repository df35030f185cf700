//! Central finite-difference verification of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{bce_loss, mae_loss, nll_loss, Matrix, Mode, Param, Sequential};
use crate::{AdepError, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step `h` in `(f(x+h) - f(x-h)) / 2h`.
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so entries whose true
    /// gradient is zero are compared on an absolute scale.
    pub denominator_floor: f64,
    /// Check at most this many evenly spaced entries per tensor.
    pub max_entries_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            denominator_floor: 1e-6,
            max_entries_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub tolerance: f64,
    pub passed: bool,
}

/// Something with parameters and a scalar objective of them.
pub trait GradTarget {
    fn params(&mut self) -> Vec<Param<'_>>;
    fn zero_grad(&mut self);
    /// Evaluates the objective; when `backward` is set, also accumulates the
    /// analytic gradient into the parameter gradient buffers.
    fn objective(&mut self, backward: bool) -> Result<f64>;
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn grad_check<T: GradTarget + ?Sized>(
    target: &mut T,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    target.zero_grad();
    target.objective(true)?;
    let analytic: Vec<(String, Vec<f64>)> = target
        .params()
        .into_iter()
        .map(|p| (p.name, p.grad.to_vec()))
        .collect();
    for (name, grad) in &analytic {
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(AdepError::Numerical {
                location: format!("analytic gradient of {name}[{i}]"),
            });
        }
    }

    let mut tensors = Vec::with_capacity(analytic.len());
    for (t, (name, grad)) in analytic.iter().enumerate() {
        let len = grad.len();
        let stride = match opts.max_entries_per_tensor {
            Some(max) if max > 0 && len > max => len.div_ceil(max),
            _ => 1,
        };
        let mut check = TensorCheck {
            name: name.clone(),
            entries_checked: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in (0..len).step_by(stride) {
            let original = target.params()[t].value[i];
            target.params()[t].value[i] = original + opts.step;
            let plus = target.objective(false)?;
            target.params()[t].value[i] = original - opts.step;
            let minus = target.objective(false)?;
            target.params()[t].value[i] = original;
            let numeric = (plus - minus) / (2.0 * opts.step);
            if !numeric.is_finite() {
                return Err(AdepError::Numerical {
                    location: format!("finite difference of {name}[{i}]"),
                });
            }
            let err = relative_error(grad[i], numeric, opts.denominator_floor);
            check.entries_checked += 1;
            if err > check.max_rel_error || check.entries_checked == 1 {
                check.max_rel_error = err;
                check.worst_index = i;
                check.analytic = grad[i];
                check.numeric = numeric;
            }
        }
        tensors.push(check);
    }
    let (max_rel_error, worst_tensor) = tensors
        .iter()
        .map(|c| (c.max_rel_error, c.name.clone()))
        .fold(
            (0.0, String::new()),
            |acc, x| if x.0 > acc.0 { x } else { acc },
        );
    Ok(GradCheckReport {
        passed: max_rel_error < opts.tolerance,
        tensors,
        max_rel_error,
        worst_tensor,
        tolerance: opts.tolerance,
    })
}

#[derive(Debug, Clone)]
pub enum LossTarget {
    /// Mean absolute error against a dense target.
    Mae(Matrix),
    /// Negative log-likelihood of class labels.
    Nll(Vec<usize>),
    /// Binary cross-entropy against 0/1 labels.
    Bce(Vec<f64>),
}

impl LossTarget {
    pub fn evaluate(&self, output: &Matrix) -> Result<super::LossValue> {
        match self {
            LossTarget::Mae(t) => mae_loss(output, t),
            LossTarget::Nll(labels) => nll_loss(output, labels),
            LossTarget::Bce(labels) => bce_loss(output, labels),
        }
    }
}

/// A layer stack plus loss, with the input optionally treated as a
/// parameter so parameter-free layers are checked through their input
/// gradient.
pub struct SequentialObjective<'a> {
    pub net: &'a mut Sequential,
    pub loss: LossTarget,
    pub input: Matrix,
    pub input_grad: Option<Vec<f64>>,
}

impl<'a> SequentialObjective<'a> {
    pub fn new(
        net: &'a mut Sequential,
        loss: LossTarget,
        input: Matrix,
        check_input: bool,
    ) -> Self {
        net.disable_dropout();
        let input_grad = check_input.then(|| vec![0.0; input.data().len()]);
        SequentialObjective {
            net,
            loss,
            input,
            input_grad,
        }
    }
}

impl GradTarget for SequentialObjective<'_> {
    fn params(&mut self) -> Vec<Param<'_>> {
        let mut params = self.net.params();
        if let Some(grad) = self.input_grad.as_mut() {
            params.push(Param {
                name: "input".into(),
                value: self.input.data_mut(),
                grad,
            });
        }
        params
    }

    fn zero_grad(&mut self) {
        self.net.zero_grad();
        if let Some(g) = self.input_grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn objective(&mut self, backward: bool) -> Result<f64> {
        // Dropout is disabled, so the generator is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.net.forward(&self.input, Mode::Train, &mut rng)?;
        let loss = self.loss.evaluate(&out)?;
        if backward {
            let g = self.net.backward(&loss.grad)?;
            if let Some(acc) = self.input_grad.as_mut() {
                for (a, v) in acc.iter_mut().zip(g.data()) {
                    *a += v;
                }
            }
        }
        Ok(loss.value)
    }
}

/// Checks a layer stack against a loss on one input batch. Dropout is
/// forced to zero and the batch must have at least two rows.
pub fn check_sequential(
    net: &mut Sequential,
    loss: LossTarget,
    input: &Matrix,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if input.rows() < 2 {
        return Err(AdepError::Config(
            "gradient check needs a batch of at least 2 rows".into(),
        ));
    }
    let mut objective = SequentialObjective::new(net, loss, input.clone(), true);
    grad_check(&mut objective, opts)
}
