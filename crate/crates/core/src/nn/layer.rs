//! Layers with explicit forward and backward passes.
//!
//! Each layer caches what its backward pass needs during `forward`. Parameter
//! gradients accumulate (`+=`) until [`Layer::zero_grad`] is called, which
//! lets one sub-network be run and back-propagated more than once per step.

use rand::Rng;

use super::Matrix;
use crate::{AdepError, Result};

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A mutable view of one parameter tensor and its gradient accumulator.
pub struct Param<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

#[derive(Debug, Clone)]
pub struct Linear {
    in_dim: usize,
    out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    weight: Matrix,
    bias: Vec<f64>,
    grad_weight: Vec<f64>,
    grad_bias: Vec<f64>,
    cache: Option<Matrix>,
}

impl Linear {
    /// Kaiming-uniform weights (bound `sqrt(6 / in_dim)`) and zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weight = Matrix::from_fn(out_dim, in_dim, |_, _| rng.gen_range(-bound..bound));
        Self::from_parts(weight, vec![0.0; out_dim]).expect("shapes are consistent by construction")
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        let (out_dim, in_dim) = weight.shape();
        if bias.len() != out_dim {
            return Err(AdepError::dim("Linear bias", out_dim, bias.len()));
        }
        Ok(Linear {
            in_dim,
            out_dim,
            grad_weight: vec![0.0; in_dim * out_dim],
            grad_bias: vec![0.0; out_dim],
            weight,
            bias,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        input.expect_cols("Linear input", self.in_dim)?;
        let mut out = input.matmul_nt(&self.weight)?;
        for row in out.data_mut().chunks_exact_mut(self.out_dim) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let input = self
            .cache
            .as_ref()
            .ok_or_else(|| AdepError::MissingCache("Linear".into()))?;
        grad_out.expect_shape("Linear grad_output", (input.rows(), self.out_dim))?;
        grad_out.matmul_tn_acc(input, &mut self.grad_weight)?;
        for row in grad_out.iter_rows() {
            for (gb, g) in self.grad_bias.iter_mut().zip(row) {
                *gb += g;
            }
        }
        grad_out.matmul(&self.weight)
    }
}

#[derive(Debug, Clone)]
struct BatchNormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    dim: usize,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    grad_gamma: Vec<f64>,
    grad_beta: Vec<f64>,
    cache: Option<BatchNormCache>,
}

impl BatchNorm {
    /// gamma = 1, beta = 0, running mean 0 and running variance 1.
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            dim,
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            grad_gamma: vec![0.0; dim],
            grad_beta: vec![0.0; dim],
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    fn forward(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        input.expect_cols("BatchNorm input", self.dim)?;
        let batch = input.rows();
        let (mean, inv_std, batch_stats) = match mode {
            Mode::Train => {
                if batch < 2 {
                    return Err(AdepError::DegenerateBatch(batch));
                }
                let n = batch as f64;
                let mut mean = vec![0.0; self.dim];
                for row in input.iter_rows() {
                    for (m, x) in mean.iter_mut().zip(row) {
                        *m += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; self.dim];
                for row in input.iter_rows() {
                    for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = x - m;
                        *v += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                let unbias = n / (n - 1.0);
                for j in 0..self.dim {
                    self.running_mean[j] = (1.0 - BATCH_NORM_MOMENTUM) * self.running_mean[j]
                        + BATCH_NORM_MOMENTUM * mean[j];
                    self.running_var[j] = (1.0 - BATCH_NORM_MOMENTUM) * self.running_var[j]
                        + BATCH_NORM_MOMENTUM * var[j] * unbias;
                }
                let inv_std: Vec<f64> = var
                    .iter()
                    .map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt())
                    .collect();
                (mean, inv_std, true)
            }
            Mode::Eval => {
                let inv_std: Vec<f64> = self
                    .running_var
                    .iter()
                    .map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt())
                    .collect();
                (self.running_mean.clone(), inv_std, false)
            }
        };
        let mut xhat = input.clone();
        let mut out = Matrix::zeros(batch, self.dim);
        for (xrow, orow) in xhat
            .data_mut()
            .chunks_exact_mut(self.dim)
            .zip(out.data_mut().chunks_exact_mut(self.dim))
        {
            for j in 0..self.dim {
                let h = (xrow[j] - mean[j]) * inv_std[j];
                xrow[j] = h;
                orow[j] = self.gamma[j] * h + self.beta[j];
            }
        }
        self.cache = Some(BatchNormCache {
            xhat,
            inv_std,
            batch_stats,
        });
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| AdepError::MissingCache("BatchNorm".into()))?;
        grad_out.expect_shape("BatchNorm grad_output", cache.xhat.shape())?;
        let dim = self.dim;
        let batch = grad_out.rows();
        let mut sum_g = vec![0.0; dim];
        let mut sum_gx = vec![0.0; dim];
        for (g, h) in grad_out.iter_rows().zip(cache.xhat.iter_rows()) {
            for j in 0..dim {
                sum_g[j] += g[j];
                sum_gx[j] += g[j] * h[j];
            }
        }
        for j in 0..dim {
            self.grad_gamma[j] += sum_gx[j];
            self.grad_beta[j] += sum_g[j];
        }
        let mut grad_in = Matrix::zeros(batch, dim);
        if cache.batch_stats {
            let n = batch as f64;
            for ((gi, g), h) in grad_in
                .data_mut()
                .chunks_exact_mut(dim)
                .zip(grad_out.iter_rows())
                .zip(cache.xhat.iter_rows())
            {
                for j in 0..dim {
                    let scale = self.gamma[j] * cache.inv_std[j] / n;
                    gi[j] = scale * (n * g[j] - sum_g[j] - h[j] * sum_gx[j]);
                }
            }
        } else {
            for (gi, g) in grad_in
                .data_mut()
                .chunks_exact_mut(dim)
                .zip(grad_out.iter_rows())
            {
                for j in 0..dim {
                    gi[j] = g[j] * self.gamma[j] * cache.inv_std[j];
                }
            }
        }
        Ok(grad_in)
    }
}

#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    /// Per-entry multiplier (0 or 1/(1-rate)); `None` means identity.
    mask: Option<Option<Vec<f64>>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AdepError::Config(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        Ok(Dropout { rate, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn forward<R: Rng + ?Sized>(&mut self, input: &Matrix, mode: Mode, rng: &mut R) -> Matrix {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = Some(None);
            return input.clone();
        }
        let keep_scale = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..input.data().len())
            .map(|_| {
                if rng.gen::<f64>() < self.rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let mut out = input.clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(Some(mask));
        out
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        match &self.mask {
            None => Err(AdepError::MissingCache("Dropout".into())),
            Some(None) => Ok(grad_out.clone()),
            Some(Some(mask)) => {
                if mask.len() != grad_out.data().len() {
                    return Err(AdepError::dim(
                        "Dropout grad_output",
                        mask.len(),
                        grad_out.data().len(),
                    ));
                }
                let mut g = grad_out.clone();
                for (v, m) in g.data_mut().iter_mut().zip(mask) {
                    *v *= m;
                }
                Ok(g)
            }
        }
    }
}

/// NaN passes through so a diverging network is not silently masked.
fn relu(x: f64) -> f64 {
    if x > 0.0 || x.is_nan() {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_softmax_rows(input: &Matrix) -> Matrix {
    let mut out = input.clone();
    let cols = out.cols();
    if cols > 0 {
        for row in out.data_mut().chunks_exact_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub enum Layer {
    Linear(Linear),
    BatchNorm(BatchNorm),
    Relu { cache: Option<Matrix> },
    Dropout(Dropout),
    Sigmoid { cache: Option<Matrix> },
    LogSoftmax { cache: Option<Matrix> },
}

impl Layer {
    pub fn linear<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Layer::Linear(Linear::new(in_dim, out_dim, rng))
    }

    pub fn batch_norm(dim: usize) -> Self {
        Layer::BatchNorm(BatchNorm::new(dim))
    }

    pub fn relu() -> Self {
        Layer::Relu { cache: None }
    }

    pub fn dropout(rate: f64) -> Result<Self> {
        Dropout::new(rate).map(Layer::Dropout)
    }

    pub fn sigmoid() -> Self {
        Layer::Sigmoid { cache: None }
    }

    pub fn log_softmax() -> Self {
        Layer::LogSoftmax { cache: None }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "Linear",
            Layer::BatchNorm(_) => "BatchNorm",
            Layer::Relu { .. } => "ReLU",
            Layer::Dropout(_) => "Dropout",
            Layer::Sigmoid { .. } => "Sigmoid",
            Layer::LogSoftmax { .. } => "LogSoftmax",
        }
    }

    /// Human-readable description, e.g. `Linear(12->8)` or `Dropout(0.3)`.
    pub fn describe(&self) -> String {
        match self {
            Layer::Linear(l) => format!("Linear({}->{})", l.in_dim, l.out_dim),
            Layer::BatchNorm(b) => format!("BatchNorm({})", b.dim),
            Layer::Dropout(d) => format!("Dropout({})", d.rate),
            other => other.kind_name().to_string(),
        }
    }

    /// Input width the layer requires, if it constrains one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Layer::Linear(l) => Some(l.in_dim),
            Layer::BatchNorm(b) => Some(b.dim),
            _ => None,
        }
    }

    pub fn output_dim(&self) -> Option<usize> {
        match self {
            Layer::Linear(l) => Some(l.out_dim),
            Layer::BatchNorm(b) => Some(b.dim),
            _ => None,
        }
    }

    /// `rng` is only drawn from by `Dropout` in train mode.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.forward(input),
            Layer::BatchNorm(b) => b.forward(input, mode),
            Layer::Relu { cache } => {
                let out = input.map(relu);
                *cache = Some(out.clone());
                Ok(out)
            }
            Layer::Dropout(d) => Ok(d.forward(input, mode, rng)),
            Layer::Sigmoid { cache } => {
                let out = input.map(sigmoid);
                *cache = Some(out.clone());
                Ok(out)
            }
            Layer::LogSoftmax { cache } => {
                let out = log_softmax_rows(input);
                *cache = Some(out.clone());
                Ok(out)
            }
        }
    }

    /// Returns the gradient with respect to the forward input and accumulates
    /// parameter gradients.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let kind = self.kind_name();
        match self {
            Layer::Linear(l) => l.backward(grad_out),
            Layer::BatchNorm(b) => b.backward(grad_out),
            Layer::Dropout(d) => d.backward(grad_out),
            Layer::Relu { cache } => {
                let out = cache
                    .as_ref()
                    .ok_or_else(|| AdepError::MissingCache(kind.into()))?;
                grad_out.expect_shape("ReLU grad_output", out.shape())?;
                let mut g = grad_out.clone();
                for (gv, o) in g.data_mut().iter_mut().zip(out.data()) {
                    if *o <= 0.0 {
                        *gv = 0.0;
                    }
                }
                Ok(g)
            }
            Layer::Sigmoid { cache } => {
                let out = cache
                    .as_ref()
                    .ok_or_else(|| AdepError::MissingCache(kind.into()))?;
                grad_out.expect_shape("Sigmoid grad_output", out.shape())?;
                let mut g = grad_out.clone();
                for (gv, s) in g.data_mut().iter_mut().zip(out.data()) {
                    *gv *= s * (1.0 - s);
                }
                Ok(g)
            }
            Layer::LogSoftmax { cache } => {
                let out = cache
                    .as_ref()
                    .ok_or_else(|| AdepError::MissingCache(kind.into()))?;
                grad_out.expect_shape("LogSoftmax grad_output", out.shape())?;
                let mut g = grad_out.clone();
                let cols = g.cols();
                if cols > 0 {
                    for (grow, orow) in g.data_mut().chunks_exact_mut(cols).zip(out.iter_rows()) {
                        let total: f64 = grow.iter().sum();
                        for (gv, o) in grow.iter_mut().zip(orow) {
                            *gv -= o.exp() * total;
                        }
                    }
                }
                Ok(g)
            }
        }
    }

    /// Eval-mode forward that leaves caches and running statistics untouched,
    /// so a frozen model can be shared across threads.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => {
                input.expect_cols("Linear input", l.in_dim)?;
                let mut out = input.matmul_nt(&l.weight)?;
                for row in out.data_mut().chunks_exact_mut(l.out_dim) {
                    for (v, b) in row.iter_mut().zip(&l.bias) {
                        *v += b;
                    }
                }
                Ok(out)
            }
            Layer::BatchNorm(b) => {
                input.expect_cols("BatchNorm input", b.dim)?;
                let mut out = input.clone();
                if b.dim > 0 {
                    let scale: Vec<f64> = b
                        .running_var
                        .iter()
                        .zip(&b.gamma)
                        .map(|(v, g)| g / (v + BATCH_NORM_EPS).sqrt())
                        .collect();
                    for row in out.data_mut().chunks_exact_mut(b.dim) {
                        for j in 0..b.dim {
                            row[j] = (row[j] - b.running_mean[j]) * scale[j] + b.beta[j];
                        }
                    }
                }
                Ok(out)
            }
            Layer::Relu { .. } => Ok(input.map(relu)),
            Layer::Dropout(_) => Ok(input.clone()),
            Layer::Sigmoid { .. } => Ok(input.map(sigmoid)),
            Layer::LogSoftmax { .. } => Ok(log_softmax_rows(input)),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Layer::Linear(l) => {
                l.grad_weight.iter_mut().for_each(|g| *g = 0.0);
                l.grad_bias.iter_mut().for_each(|g| *g = 0.0);
            }
            Layer::BatchNorm(b) => {
                b.grad_gamma.iter_mut().for_each(|g| *g = 0.0);
                b.grad_beta.iter_mut().for_each(|g| *g = 0.0);
            }
            _ => {}
        }
    }

    /// Learnable tensors; empty for parameter-free layers.
    pub fn params(&mut self) -> Vec<Param<'_>> {
        match self {
            Layer::Linear(l) => vec![
                Param {
                    name: "weight".into(),
                    value: l.weight.data_mut(),
                    grad: &mut l.grad_weight,
                },
                Param {
                    name: "bias".into(),
                    value: &mut l.bias,
                    grad: &mut l.grad_bias,
                },
            ],
            Layer::BatchNorm(b) => vec![
                Param {
                    name: "gamma".into(),
                    value: &mut b.gamma,
                    grad: &mut b.grad_gamma,
                },
                Param {
                    name: "beta".into(),
                    value: &mut b.beta,
                    grad: &mut b.grad_beta,
                },
            ],
            _ => Vec::new(),
        }
    }

    /// Every persisted tensor with its shape: learnable parameters plus
    /// BatchNorm running statistics.
    pub fn state(&mut self) -> Vec<(&'static str, Vec<usize>, &mut [f64])> {
        match self {
            Layer::Linear(l) => {
                let shape = vec![l.out_dim, l.in_dim];
                vec![
                    ("weight", shape, l.weight.data_mut()),
                    ("bias", vec![l.out_dim], &mut l.bias),
                ]
            }
            Layer::BatchNorm(b) => {
                let d = b.dim;
                vec![
                    ("gamma", vec![d], &mut b.gamma),
                    ("beta", vec![d], &mut b.beta),
                    ("running_mean", vec![d], &mut b.running_mean),
                    ("running_var", vec![d], &mut b.running_var),
                ]
            }
            _ => Vec::new(),
        }
    }

    /// Accumulated parameter gradients, present exactly for Linear and BatchNorm.
    pub fn param_grads(&self) -> Option<Vec<(&'static str, &[f64])>> {
        match self {
            Layer::Linear(l) => Some(vec![("weight", &l.grad_weight), ("bias", &l.grad_bias)]),
            Layer::BatchNorm(b) => Some(vec![("gamma", &b.grad_gamma), ("beta", &b.grad_beta)]),
            _ => None,
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        match self {
            Layer::Linear(l) => l.cache = None,
            Layer::BatchNorm(b) => b.cache = None,
            Layer::Dropout(d) => d.mask = None,
            Layer::Relu { cache } | Layer::Sigmoid { cache } | Layer::LogSoftmax { cache } => {
                *cache = None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn linear_identity_forward_and_backward() {
        let w = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let mut layer = Layer::Linear(Linear::from_parts(w, vec![0.0, 0.0]).unwrap());
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let y = layer.forward(&x, Mode::Train, &mut rng()).unwrap();
        assert_eq!(y, x);
        let g = layer
            .backward(&Matrix::from_rows(&[[1.0, 0.0]]).unwrap())
            .unwrap();
        assert_eq!(g.data(), &[1.0, 0.0]);
        let grads = layer.param_grads().unwrap();
        assert_eq!(grads[0].1, &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(grads[1].1, &[1.0, 0.0]);
    }

    #[test]
    fn relu_forward_and_gate() {
        let mut layer = Layer::relu();
        let y = layer
            .forward(
                &Matrix::from_rows(&[[-1.0, 0.0, 3.0]]).unwrap(),
                Mode::Train,
                &mut rng(),
            )
            .unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 3.0]);

        let mut layer = Layer::relu();
        layer
            .forward(
                &Matrix::from_rows(&[[-1.0, 3.0]]).unwrap(),
                Mode::Train,
                &mut rng(),
            )
            .unwrap();
        let g = layer
            .backward(&Matrix::from_rows(&[[5.0, 5.0]]).unwrap())
            .unwrap();
        assert_eq!(g.data(), &[0.0, 5.0]);
        assert!(layer.param_grads().is_none());
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut layer = Layer::dropout(0.3).unwrap();
        let x = Matrix::from_fn(5, 7, |i, j| (i * 7 + j) as f64 - 10.0);
        assert_eq!(layer.forward(&x, Mode::Eval, &mut rng()).unwrap(), x);
        assert!(Layer::dropout(1.0).is_err());
        assert!(Layer::dropout(-0.1).is_err());
    }

    #[test]
    fn batch_norm_train_normalizes_columns() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::from_fn(32, 5, |_, j| {
            r.gen_range(-1.0..1.0) * (j as f64 + 4.0) + 3.0 * j as f64
        });
        let mut layer = Layer::batch_norm(5);
        let y = layer.forward(&x, Mode::Train, &mut rng()).unwrap();
        // Oracle: batch moments computed directly from the output.
        for j in 0..5 {
            let col: Vec<f64> = (0..32).map(|i| y.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / 32.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
            let xcol: Vec<f64> = (0..32).map(|i| x.get(i, j)).collect();
            let xm = xcol.iter().sum::<f64>() / 32.0;
            let xv = xcol.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - xv / (xv + BATCH_NORM_EPS)).abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_rejects_single_row_in_train() {
        let mut layer = Layer::batch_norm(3);
        let err = layer
            .forward(&Matrix::zeros(1, 3), Mode::Train, &mut rng())
            .unwrap_err();
        assert!(matches!(err, AdepError::DegenerateBatch(1)));
        assert!(layer
            .forward(&Matrix::zeros(1, 3), Mode::Eval, &mut rng())
            .is_ok());
    }

    #[test]
    fn backward_before_forward_errors() {
        let mut r = rng();
        for mut layer in [
            Layer::linear(3, 2, &mut r),
            Layer::batch_norm(3),
            Layer::relu(),
            Layer::dropout(0.5).unwrap(),
            Layer::sigmoid(),
            Layer::log_softmax(),
        ] {
            let err = layer.backward(&Matrix::zeros(2, 3)).unwrap_err();
            assert!(
                matches!(err, AdepError::MissingCache(_)),
                "{}",
                layer.kind_name()
            );
        }
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let mut layer = Layer::linear(4, 2, &mut rng());
        let err = layer
            .forward(&Matrix::zeros(2, 3), Mode::Train, &mut rng())
            .unwrap_err();
        assert!(matches!(err, AdepError::Dimension { .. }));
        let mut bn = Layer::batch_norm(4);
        assert!(bn
            .forward(&Matrix::zeros(2, 3), Mode::Train, &mut rng())
            .is_err());
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::from_fn(6, 9, |_, _| r.gen_range(-30.0..30.0));
        let y = Layer::log_softmax()
            .forward(&x, Mode::Train, &mut rng())
            .unwrap();
        for row in y.iter_rows() {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
