//! The encoder / decoder / classifier / discriminator stack.
//!
//! One encoder forward per step produces the latent batch `z`, which feeds
//! all three heads. The decoder reconstructs the binary input (MAE), the
//! classifier predicts the event class (NLL on LogSoftmax output) and the
//! discriminator scores real latents against sampled fake ones (BCE).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{
    bce_loss, grad_check, mae_loss, nll_loss, GradCheckOptions, GradCheckReport, GradTarget, Layer,
    Matrix, Mode, Param, Sequential,
};
use crate::rng::{self, Rng, Stream};
use crate::{AdepError, Result};

pub const PRODUCTION_HIDDEN: usize = 4096;
pub const PRODUCTION_LATENT: usize = 2048;
pub const PRODUCTION_HEAD_HIDDEN: [usize; 2] = [512, 256];

const ENCODER_DROPOUT: [f64; 2] = [0.3, 0.2];
const DECODER_DROPOUT: f64 = 0.3;
const CLASSIFIER_DROPOUT: f64 = 0.2;

/// Width preset for the sub-networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchSize {
    /// 4096-unit hidden layer, 2048-unit latent, 512/256 head layers.
    #[default]
    Production,
    /// Tiny widths (8 hidden, 4 latent, 6/5 heads) for gradient checks.
    Mini,
    /// Arbitrary widths for fast experiments; heads use latent/4 and latent/8.
    Scaled { hidden: usize, latent: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdepArch {
    pub input_dim: usize,
    pub classes: usize,
    pub hidden: usize,
    pub latent: usize,
    pub classifier_hidden: [usize; 2],
    pub discriminator_hidden: [usize; 2],
}

impl AdepArch {
    pub fn new(size: ArchSize, input_dim: usize, classes: usize) -> Result<Self> {
        let (hidden, latent, heads) = match size {
            ArchSize::Production => (PRODUCTION_HIDDEN, PRODUCTION_LATENT, PRODUCTION_HEAD_HIDDEN),
            ArchSize::Mini => (8, 4, [6, 5]),
            ArchSize::Scaled { hidden, latent } => {
                (hidden, latent, [(latent / 4).max(2), (latent / 8).max(2)])
            }
        };
        let arch = AdepArch {
            input_dim,
            classes,
            hidden,
            latent,
            classifier_hidden: heads,
            discriminator_hidden: heads,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn production(input_dim: usize, classes: usize) -> Result<Self> {
        Self::new(ArchSize::Production, input_dim, classes)
    }

    pub fn mini(input_dim: usize, classes: usize) -> Result<Self> {
        Self::new(ArchSize::Mini, input_dim, classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(AdepError::Config("input dimension must be positive".into()));
        }
        if self.classes < 2 {
            return Err(AdepError::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        let widths = [self.hidden, self.latent]
            .into_iter()
            .chain(self.classifier_hidden)
            .chain(self.discriminator_hidden);
        if widths.into_iter().any(|w| w == 0) {
            return Err(AdepError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subnet {
    Encoder,
    Decoder,
    Classifier,
    Discriminator,
}

impl Subnet {
    pub const ALL: [Subnet; 4] = [
        Subnet::Encoder,
        Subnet::Decoder,
        Subnet::Classifier,
        Subnet::Discriminator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subnet::Encoder => "encoder",
            Subnet::Decoder => "decoder",
            Subnet::Classifier => "classifier",
            Subnet::Discriminator => "discriminator",
        }
    }
}

/// Loss weights for the composite objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossCoefficients {
    fn default() -> Self {
        LossCoefficients {
            alpha: 0.5,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossCoefficients {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(AdepError::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `alpha * ae + beta * cls + gamma * adv`, always evaluated in this order.
    pub fn combine(&self, ae: f64, cls: f64, adv: f64) -> f64 {
        self.alpha * ae + self.beta * cls + self.gamma * adv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub autoencoder_loss: f64,
    pub classifier_loss: f64,
    /// Real-latent BCE plus fake-latent BCE.
    pub adversarial_loss: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(coeffs: &LossCoefficients, ae: f64, cls: f64, adv: f64) -> Self {
        LossBreakdown {
            autoencoder_loss: ae,
            classifier_loss: cls,
            adversarial_loss: adv,
            total: coeffs.combine(ae, cls, adv),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FakeLatentStrategy {
    /// i.i.d. N(0, 1) entries.
    #[default]
    StandardNormal,
    /// N(mu_d, sigma_d^2) per latent dimension, moments taken from the
    /// current real latent batch.
    EmpiricalMoments,
}

/// Floor applied to per-dimension standard deviations measured on a real batch.
pub const MOMENT_STD_FLOOR: f64 = 1e-8;

pub fn sample_fake_latent(
    strategy: FakeLatentStrategy,
    batch: usize,
    latent: usize,
    real: Option<&Matrix>,
    rng: &mut Rng,
) -> Result<Matrix> {
    match strategy {
        FakeLatentStrategy::StandardNormal => Ok(Matrix::from_fn(batch, latent, |_, _| {
            StandardNormal.sample(rng)
        })),
        FakeLatentStrategy::EmpiricalMoments => {
            let real = real
                .filter(|r| r.rows() >= 2)
                .ok_or(AdepError::MissingStatistics)?;
            real.expect_cols("empirical fake latent", latent)?;
            let n = real.rows() as f64;
            let mut mean = vec![0.0; latent];
            for row in real.iter_rows() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut std = vec![0.0; latent];
            for row in real.iter_rows() {
                for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            std.iter_mut()
                .for_each(|s| *s = (*s / n).sqrt().max(MOMENT_STD_FLOOR));
            Ok(Matrix::from_fn(batch, latent, |_, j| {
                let e: f64 = StandardNormal.sample(rng);
                mean[j] + std[j] * e
            }))
        }
    }
}

/// Dropout streams, one per sub-network that has dropout.
#[derive(Debug, Clone)]
pub struct DropoutRngs {
    pub encoder: Rng,
    pub decoder: Rng,
    pub classifier: Rng,
}

impl DropoutRngs {
    pub fn from_seed(seed: u64) -> Self {
        DropoutRngs {
            encoder: rng::stream(seed, Stream::EncoderDropout),
            decoder: rng::stream(seed, Stream::DecoderDropout),
            classifier: rng::stream(seed, Stream::ClassifierDropout),
        }
    }
}

/// Rng handed to layers that never draw from it (no dropout).
fn unused_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

#[derive(Debug, Clone)]
pub struct AdepModel {
    arch: AdepArch,
    encoder: Sequential,
    decoder: Sequential,
    classifier: Sequential,
    discriminator: Sequential,
}

impl AdepModel {
    /// Fresh parameters drawn from the init stream of `seed`.
    pub fn new(arch: AdepArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng::stream(seed, Stream::Init);
        let AdepArch {
            input_dim: d,
            classes: c,
            hidden: h,
            latent: z,
            classifier_hidden: [c1, c2],
            discriminator_hidden: [d1, d2],
        } = arch;
        let encoder = Sequential::new(
            "encoder",
            vec![
                Layer::linear(d, h, &mut r),
                Layer::batch_norm(h),
                Layer::relu(),
                Layer::dropout(ENCODER_DROPOUT[0])?,
                Layer::linear(h, z, &mut r),
                Layer::batch_norm(z),
                Layer::relu(),
                Layer::dropout(ENCODER_DROPOUT[1])?,
            ],
        )?;
        let decoder = Sequential::new(
            "decoder",
            vec![
                Layer::linear(z, h, &mut r),
                Layer::batch_norm(h),
                Layer::relu(),
                Layer::dropout(DECODER_DROPOUT)?,
                Layer::linear(h, d, &mut r),
                Layer::sigmoid(),
            ],
        )?;
        let classifier = Sequential::new(
            "classifier",
            vec![
                Layer::linear(z, c1, &mut r),
                Layer::batch_norm(c1),
                Layer::relu(),
                Layer::dropout(CLASSIFIER_DROPOUT)?,
                Layer::linear(c1, c2, &mut r),
                Layer::batch_norm(c2),
                Layer::relu(),
                Layer::linear(c2, c, &mut r),
                Layer::log_softmax(),
            ],
        )?;
        let discriminator = Sequential::new(
            "discriminator",
            vec![
                Layer::linear(z, d1, &mut r),
                Layer::batch_norm(d1),
                Layer::relu(),
                Layer::linear(d1, d2, &mut r),
                Layer::batch_norm(d2),
                Layer::relu(),
                Layer::linear(d2, 1, &mut r),
                Layer::sigmoid(),
            ],
        )?;
        Ok(AdepModel {
            arch,
            encoder,
            decoder,
            classifier,
            discriminator,
        })
    }

    pub fn arch(&self) -> &AdepArch {
        &self.arch
    }

    pub fn subnet(&self, which: Subnet) -> &Sequential {
        match which {
            Subnet::Encoder => &self.encoder,
            Subnet::Decoder => &self.decoder,
            Subnet::Classifier => &self.classifier,
            Subnet::Discriminator => &self.discriminator,
        }
    }

    pub fn subnet_mut(&mut self, which: Subnet) -> &mut Sequential {
        match which {
            Subnet::Encoder => &mut self.encoder,
            Subnet::Decoder => &mut self.decoder,
            Subnet::Classifier => &mut self.classifier,
            Subnet::Discriminator => &mut self.discriminator,
        }
    }

    /// Parameters of the listed sub-networks, in the order given.
    pub fn params_of(&mut self, which: &[Subnet]) -> Vec<Param<'_>> {
        let AdepModel {
            encoder,
            decoder,
            classifier,
            discriminator,
            ..
        } = self;
        let mut nets: [(Subnet, Option<&mut Sequential>); 4] = [
            (Subnet::Encoder, Some(encoder)),
            (Subnet::Decoder, Some(decoder)),
            (Subnet::Classifier, Some(classifier)),
            (Subnet::Discriminator, Some(discriminator)),
        ];
        let mut out = Vec::new();
        for w in which {
            if let Some(net) = nets
                .iter_mut()
                .find(|(s, _)| s == w)
                .and_then(|(_, n)| n.take())
            {
                out.extend(net.params());
            }
        }
        out
    }

    pub fn params(&mut self) -> Vec<Param<'_>> {
        self.params_of(&Subnet::ALL)
    }

    pub fn param_count(&mut self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// All persisted tensors across the four sub-networks.
    pub fn state(&mut self) -> Vec<(String, Vec<usize>, &mut [f64])> {
        let AdepModel {
            encoder,
            decoder,
            classifier,
            discriminator,
            ..
        } = self;
        [encoder, decoder, classifier, discriminator]
            .into_iter()
            .flat_map(|net| net.state())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        Subnet::ALL
            .iter()
            .for_each(|&s| self.subnet_mut(s).zero_grad());
    }

    pub fn disable_dropout(&mut self) {
        Subnet::ALL
            .iter()
            .for_each(|&s| self.subnet_mut(s).disable_dropout());
    }

    pub fn clear_caches(&mut self) {
        Subnet::ALL
            .iter()
            .for_each(|&s| self.subnet_mut(s).clear_caches());
    }

    fn expect_input(&self, x: &Matrix) -> Result<()> {
        x.expect_cols("encoder input", self.arch.input_dim)
    }

    fn expect_latent(&self, z: &Matrix, context: &str) -> Result<()> {
        z.expect_cols(context, self.arch.latent)
    }

    pub fn encode(&mut self, x: &Matrix, mode: Mode, rng: &mut Rng) -> Result<Matrix> {
        self.expect_input(x)?;
        self.encoder.forward(x, mode, rng)
    }

    pub fn decode(&mut self, z: &Matrix, mode: Mode, rng: &mut Rng) -> Result<Matrix> {
        self.expect_latent(z, "decoder input")?;
        self.decoder.forward(z, mode, rng)
    }

    pub fn classify(&mut self, z: &Matrix, mode: Mode, rng: &mut Rng) -> Result<Matrix> {
        self.expect_latent(z, "classifier input")?;
        self.classifier.forward(z, mode, rng)
    }

    pub fn discriminate(&mut self, z: &Matrix, mode: Mode) -> Result<Matrix> {
        self.expect_latent(z, "discriminator input")?;
        self.discriminator.forward(z, mode, &mut unused_rng())
    }

    /// Eval-mode latent without touching caches.
    pub fn infer_latent(&self, x: &Matrix) -> Result<Matrix> {
        self.expect_input(x)?;
        self.encoder.infer(x)
    }

    /// Eval-mode class log-probabilities for a batch of inputs.
    pub fn infer_log_probs(&self, x: &Matrix) -> Result<Matrix> {
        self.classifier.infer(&self.infer_latent(x)?)
    }

    pub fn infer_reconstruction(&self, x: &Matrix) -> Result<Matrix> {
        self.decoder.infer(&self.infer_latent(x)?)
    }

    pub fn infer_discriminator(&self, z: &Matrix) -> Result<Matrix> {
        self.expect_latent(z, "discriminator input")?;
        self.discriminator.infer(z)
    }

    /// Forward-only evaluation of all loss components on one batch.
    ///
    /// The fake latent batch is drawn from `fake_rng` after encoding, so the
    /// empirical-moment strategy sees the same real batch.
    #[allow(clippy::too_many_arguments)]
    pub fn compute_losses(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        coeffs: &LossCoefficients,
        strategy: FakeLatentStrategy,
        mode: Mode,
        dropout: &mut DropoutRngs,
        fake_rng: &mut Rng,
    ) -> Result<LossBreakdown> {
        coeffs.validate()?;
        let z = self.encode(x, mode, &mut dropout.encoder)?;
        let fake = sample_fake_latent(strategy, z.rows(), self.arch.latent, Some(&z), fake_rng)?;
        Ok(self
            .heads(x, &z, labels, coeffs, Some(&fake), mode, dropout, false)?
            .0)
    }

    /// Runs the three heads on an already-encoded batch and returns the
    /// losses with the classifier's argmax predictions.
    ///
    /// With `backward` set, gradients of `alpha*AE + beta*CLS + gamma*ADV`
    /// are accumulated into every sub-network, including the encoder. A
    /// term whose coefficient is zero contributes nothing to the encoder.
    /// `fake = None` disables the discriminator: ADV is reported as 0.
    #[allow(clippy::too_many_arguments)]
    pub fn heads(
        &mut self,
        x: &Matrix,
        z: &Matrix,
        labels: &[usize],
        coeffs: &LossCoefficients,
        fake: Option<&Matrix>,
        mode: Mode,
        dropout: &mut DropoutRngs,
        backward: bool,
    ) -> Result<(LossBreakdown, Vec<usize>)> {
        if labels.len() != x.rows() {
            return Err(AdepError::dim("labels", x.rows(), labels.len()));
        }
        let mut grad_z = backward.then(|| Matrix::zeros(z.rows(), z.cols()));

        let recon = self.decode(z, mode, &mut dropout.decoder)?;
        let ae = mae_loss(&recon, x)?;
        if let Some(gz) = grad_z.as_mut().filter(|_| coeffs.alpha != 0.0) {
            let mut g = ae.grad;
            g.scale(coeffs.alpha);
            gz.add_assign(&self.decoder.backward(&g)?)?;
        }

        let log_probs = self.classify(z, mode, &mut dropout.classifier)?;
        let predictions = log_probs.argmax_rows();
        let cls = nll_loss(&log_probs, labels)?;
        if let Some(gz) = grad_z.as_mut().filter(|_| coeffs.beta != 0.0) {
            let mut g = cls.grad;
            g.scale(coeffs.beta);
            gz.add_assign(&self.classifier.backward(&g)?)?;
        }

        let adv = match fake {
            Some(fake) => {
                let real = self.real_bce(z, mode, grad_z.as_mut(), coeffs.gamma)?;
                let fake = self.fake_bce(fake, mode, backward, coeffs.gamma)?;
                real + fake
            }
            None => 0.0,
        };

        if let Some(gz) = grad_z {
            self.encoder.backward(&gz)?;
        }
        Ok((
            LossBreakdown::new(coeffs, ae.value, cls.value, adv),
            predictions,
        ))
    }

    /// BCE of the discriminator on real latents labelled 1. When `grad_z` is
    /// given, accumulates `gamma`-scaled gradients into the discriminator and
    /// adds the latent gradient to `grad_z`.
    fn real_bce(
        &mut self,
        z: &Matrix,
        mode: Mode,
        grad_z: Option<&mut Matrix>,
        gamma: f64,
    ) -> Result<f64> {
        let p = self.discriminate(z, mode)?;
        let loss = bce_loss(&p, &vec![1.0; z.rows()])?;
        if let Some(gz) = grad_z.filter(|_| gamma != 0.0) {
            let mut g = loss.grad;
            g.scale(gamma);
            gz.add_assign(&self.discriminator.backward(&g)?)?;
        }
        Ok(loss.value)
    }

    fn fake_bce(&mut self, fake: &Matrix, mode: Mode, backward: bool, gamma: f64) -> Result<f64> {
        let p = self.discriminate(fake, mode)?;
        let loss = bce_loss(&p, &vec![0.0; fake.rows()])?;
        if backward && gamma != 0.0 {
            let mut g = loss.grad;
            g.scale(gamma);
            self.discriminator.backward(&g)?;
        }
        Ok(loss.value)
    }

    /// Discriminator half of the alternating scheme:
    /// `gamma * (BCE(D(z), 1) + BCE(D(fake), 0))` with `z` treated as a constant. Gradients reach
    /// only the discriminator. Returns the unweighted adversarial loss.
    pub fn discriminator_objective(
        &mut self,
        z: &Matrix,
        fake: &Matrix,
        gamma: f64,
        backward: bool,
    ) -> Result<f64> {
        let mut sink = backward.then(|| Matrix::zeros(z.rows(), z.cols()));
        let real = self.real_bce(z, Mode::Train, sink.as_mut(), gamma)?;
        let fake = self.fake_bce(fake, Mode::Train, backward, gamma)?;
        Ok(real + fake)
    }

    /// Generator half of the alternating scheme: `alpha*AE + beta*CLS +
    /// gamma*BCE(D(z), 1)`, back-propagated into encoder, decoder and
    /// classifier. Discriminator gradients produced on the way are cleared.
    /// Returns `(ae, cls, fooling_bce, predictions)`; the fooling term is 0
    /// when `discriminator` is false.
    #[allow(clippy::too_many_arguments)]
    pub fn generator_objective(
        &mut self,
        x: &Matrix,
        z: &Matrix,
        labels: &[usize],
        coeffs: &LossCoefficients,
        discriminator: bool,
        dropout: &mut DropoutRngs,
        backward: bool,
    ) -> Result<(f64, f64, f64, Vec<usize>)> {
        let no_adv = LossCoefficients {
            gamma: 0.0,
            ..*coeffs
        };
        // Heads without the adversarial term; the encoder backward is deferred.
        let mut grad_z = backward.then(|| Matrix::zeros(z.rows(), z.cols()));
        let recon = self.decode(z, Mode::Train, &mut dropout.decoder)?;
        let ae = mae_loss(&recon, x)?;
        if let Some(gz) = grad_z.as_mut().filter(|_| no_adv.alpha != 0.0) {
            let mut g = ae.grad;
            g.scale(no_adv.alpha);
            gz.add_assign(&self.decoder.backward(&g)?)?;
        }
        let log_probs = self.classify(z, Mode::Train, &mut dropout.classifier)?;
        let predictions = log_probs.argmax_rows();
        let cls = nll_loss(&log_probs, labels)?;
        if let Some(gz) = grad_z.as_mut().filter(|_| no_adv.beta != 0.0) {
            let mut g = cls.grad;
            g.scale(no_adv.beta);
            gz.add_assign(&self.classifier.backward(&g)?)?;
        }
        let fool = if discriminator {
            let v = self.real_bce(z, Mode::Train, grad_z.as_mut(), coeffs.gamma)?;
            self.discriminator.zero_grad();
            v
        } else {
            0.0
        };
        if let Some(gz) = grad_z {
            self.encoder.backward(&gz)?;
        }
        Ok((ae.value, cls.value, fool, predictions))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialMode {
    /// One backward pass through the full weighted objective.
    #[default]
    Joint,
    /// Discriminator step on real/fake BCE, then an encoder-side step on the
    /// reconstruction, classification and discriminator-fooling terms.
    Alternating,
}

/// Which objective a gradient check differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CheckedObjective {
    Joint,
    Discriminator,
    Generator,
}

/// Gradient-check harness over the composite objective with a fixed batch
/// and a fixed fake latent sample. Dropout must be disabled on the model.
pub struct AdepObjective<'a> {
    model: &'a mut AdepModel,
    x: Matrix,
    labels: Vec<usize>,
    coeffs: LossCoefficients,
    fake: Matrix,
    which: CheckedObjective,
}

impl AdepObjective<'_> {
    fn subnets(&self) -> &'static [Subnet] {
        match self.which {
            CheckedObjective::Joint => &Subnet::ALL,
            CheckedObjective::Discriminator => &[Subnet::Discriminator],
            CheckedObjective::Generator => &[Subnet::Encoder, Subnet::Decoder, Subnet::Classifier],
        }
    }
}

impl GradTarget for AdepObjective<'_> {
    fn params(&mut self) -> Vec<Param<'_>> {
        let subnets = self.subnets();
        self.model.params_of(subnets)
    }

    fn zero_grad(&mut self) {
        self.model.zero_grad();
    }

    fn objective(&mut self, backward: bool) -> Result<f64> {
        let mut dropout = DropoutRngs::from_seed(0);
        let z = self
            .model
            .encode(&self.x, Mode::Train, &mut dropout.encoder)?;
        match self.which {
            CheckedObjective::Joint => {
                let (b, _) = self.model.heads(
                    &self.x,
                    &z,
                    &self.labels,
                    &self.coeffs,
                    Some(&self.fake),
                    Mode::Train,
                    &mut dropout,
                    backward,
                )?;
                Ok(b.total)
            }
            CheckedObjective::Discriminator => {
                let adv = self.model.discriminator_objective(
                    &z,
                    &self.fake,
                    self.coeffs.gamma,
                    backward,
                )?;
                Ok(self.coeffs.gamma * adv)
            }
            CheckedObjective::Generator => {
                let (ae, cls, fool, _) = self.model.generator_objective(
                    &self.x,
                    &z,
                    &self.labels,
                    &self.coeffs,
                    true,
                    &mut dropout,
                    backward,
                )?;
                Ok(self.coeffs.combine(ae, cls, fool))
            }
        }
    }
}

/// Finite-difference check of the composite objective on `model`.
///
/// Dropout is forced off. In joint mode every parameter is checked against
/// the weighted total; in alternating mode the discriminator is checked
/// against its real/fake objective and the other three sub-networks against
/// the generator objective, and the two reports are merged.
pub fn check_adep_gradients(
    model: &mut AdepModel,
    x: &Matrix,
    labels: &[usize],
    coeffs: &LossCoefficients,
    mode: AdversarialMode,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if x.rows() < 2 {
        return Err(AdepError::Config(
            "gradient check needs a batch of at least 2 rows".into(),
        ));
    }
    model.disable_dropout();
    let mut fake_rng = rng::stream(seed, Stream::FakeLatent);
    let fake = sample_fake_latent(
        FakeLatentStrategy::StandardNormal,
        x.rows(),
        model.arch.latent,
        None,
        &mut fake_rng,
    )?;
    let objectives: &[CheckedObjective] = match mode {
        AdversarialMode::Joint => &[CheckedObjective::Joint],
        AdversarialMode::Alternating => {
            &[CheckedObjective::Discriminator, CheckedObjective::Generator]
        }
    };
    let mut merged: Option<GradCheckReport> = None;
    for &which in objectives {
        let mut target = AdepObjective {
            model: &mut *model,
            x: x.clone(),
            labels: labels.to_vec(),
            coeffs: *coeffs,
            fake: fake.clone(),
            which,
        };
        let report = grad_check(&mut target, opts)?;
        merged = Some(match merged {
            None => report,
            Some(mut acc) => {
                if report.max_rel_error > acc.max_rel_error {
                    acc.max_rel_error = report.max_rel_error;
                    acc.worst_tensor = report.worst_tensor.clone();
                }
                acc.tensors.extend(report.tensors);
                acc.passed = acc.max_rel_error < acc.tolerance;
                acc
            }
        });
    }
    Ok(merged.expect("at least one objective"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| if r.gen_bool(0.3) { 1.0 } else { 0.0 })
    }

    #[test]
    fn shapes_follow_the_architecture() {
        let arch = AdepArch::new(
            ArchSize::Scaled {
                hidden: 16,
                latent: 8,
            },
            10,
            3,
        )
        .unwrap();
        let mut model = AdepModel::new(arch, 1).unwrap();
        let mut d = DropoutRngs::from_seed(1);
        let x = batch(5, 10, 2);
        let z = model.encode(&x, Mode::Train, &mut d.encoder).unwrap();
        assert_eq!(z.shape(), (5, 8));
        assert_eq!(
            model
                .decode(&z, Mode::Train, &mut d.decoder)
                .unwrap()
                .shape(),
            (5, 10)
        );
        assert_eq!(
            model
                .classify(&z, Mode::Train, &mut d.classifier)
                .unwrap()
                .shape(),
            (5, 3)
        );
        assert_eq!(model.discriminate(&z, Mode::Train).unwrap().shape(), (5, 1));
        assert!(model
            .encode(&batch(5, 9, 2), Mode::Eval, &mut d.encoder)
            .is_err());
        assert!(model
            .decode(&batch(5, 7, 2), Mode::Eval, &mut d.decoder)
            .is_err());
    }

    #[test]
    fn architecture_validation() {
        assert!(AdepArch::production(0, 3).is_err());
        assert!(AdepArch::production(10, 1).is_err());
        let a = AdepArch::production(26_386, 65).unwrap();
        assert_eq!(
            (a.hidden, a.latent, a.classifier_hidden),
            (4096, 2048, [512, 256])
        );
    }

    #[test]
    fn zero_latent_decodes_to_one_half() {
        let arch = AdepArch::new(
            ArchSize::Scaled {
                hidden: 16,
                latent: 8,
            },
            10,
            3,
        )
        .unwrap();
        let model = AdepModel::new(arch, 4).unwrap();
        let out = model.decoder.infer(&Matrix::zeros(3, 8)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn coefficient_combination() {
        let c = LossCoefficients::default();
        assert_eq!(c.combine(2.0, 1.0, 0.5), 2.5);
        assert!(LossCoefficients { alpha: -1.0, ..c }.validate().is_err());
        assert!(LossCoefficients {
            gamma: f64::NAN,
            ..c
        }
        .validate()
        .is_err());
    }

    #[test]
    fn empirical_moments_need_a_real_batch() {
        let mut r = rng::stream(1, Stream::FakeLatent);
        let err = sample_fake_latent(FakeLatentStrategy::EmpiricalMoments, 4, 3, None, &mut r)
            .unwrap_err();
        assert!(matches!(err, AdepError::MissingStatistics));
        let one_row = Matrix::zeros(1, 3);
        assert!(sample_fake_latent(
            FakeLatentStrategy::EmpiricalMoments,
            4,
            3,
            Some(&one_row),
            &mut r
        )
        .is_err());
        let constant = Matrix::from_fn(5, 3, |_, j| j as f64 + 0.5);
        let fake = sample_fake_latent(
            FakeLatentStrategy::EmpiricalMoments,
            6,
            3,
            Some(&constant),
            &mut r,
        )
        .unwrap();
        for row in fake.iter_rows() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - (j as f64 + 0.5)).abs() < 1e-6);
            }
        }
    }
}
