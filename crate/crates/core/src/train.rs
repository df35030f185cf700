//! Training loop, evaluation, cross-validation and ablation runs.
//!
//! Pair vectors are materialized one batch at a time from the feature table,
//! so memory stays bounded by the batch size even for 38k-wide inputs.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_baseline, BaselineConfig, BaselineKind};
use crate::data::{expand_symmetric, stratified_kfold, Dataset, FoldSplit, PairSample};
use crate::metrics::{self, MetricsReport};
use crate::model::{
    sample_fake_latent, AdepArch, AdepModel, AdversarialMode, ArchSize, DropoutRngs,
    FakeLatentStrategy, LossCoefficients, Subnet,
};
use crate::nn::{Adam, AdamConfig, Matrix, Mode};
use crate::rng::{self, Rng, Stream};
use crate::{AdepError, Result};

/// Rows pushed through the network at once during evaluation.
pub const EVAL_CHUNK: usize = 256;

/// Folds used to carve an early-stopping validation set out of the training pairs.
const EARLY_STOP_FOLDS: usize = 10;

/// How held-out pairs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalOrdering {
    /// Both orderings of every pair count as independent samples.
    #[default]
    Both,
    /// One sample per pair: the mean of the two orderings' probabilities.
    PairMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub adversarial_mode: AdversarialMode,
    pub fake_latent_strategy: FakeLatentStrategy,
    pub discriminator_enabled: bool,
    pub seed: u64,
    /// Early stopping on validation micro-F1; `None` trains every epoch.
    pub patience: Option<usize>,
    pub arch: ArchSize,
    pub folds: usize,
    pub eval_ordering: EvalOrdering,
    pub baseline: BaselineConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            beta: 1.0,
            gamma: 1.0,
            epochs: 30,
            batch_size: 128,
            adam: AdamConfig::default(),
            adversarial_mode: AdversarialMode::Joint,
            fake_latent_strategy: FakeLatentStrategy::StandardNormal,
            discriminator_enabled: true,
            seed: 0,
            patience: None,
            arch: ArchSize::Production,
            folds: 5,
            eval_ordering: EvalOrdering::Both,
            baseline: BaselineConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.coefficients().validate()?;
        let bad = |m: String| Err(AdepError::Config(m));
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            ));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return bad(format!("adam.lr must be positive, got {}", a.lr));
        }
        if !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.epsilon.is_nan()
            || a.epsilon <= 0.0
        {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.patience == Some(0) {
            return bad("patience must be positive when set".into());
        }
        self.baseline.validate()
    }

    /// Reads a JSON config. A missing file is a configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AdepError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| AdepError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn arch_for(&self, dataset: &Dataset) -> Result<AdepArch> {
        AdepArch::new(self.arch, dataset.pair_width(), dataset.classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ae_loss: f64,
    pub cls_loss: f64,
    pub adv_loss: f64,
    pub total: f64,
    pub train_acc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_metrics: Option<MetricsReport>,
    /// Kept out of the JSON log so identical runs give identical logs.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept when early stopping ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let epochs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<EpochRecord>, _>>()?;
        Ok(TrainHistory {
            epochs,
            best_epoch: None,
        })
    }

    /// Largest gap between a recorded total and its recombined components.
    pub fn max_recombination_error(&self, coeffs: &LossCoefficients) -> f64 {
        self.epochs
            .iter()
            .map(|e| (e.total - coeffs.combine(e.ae_loss, e.cls_loss, e.adv_loss)).abs())
            .fold(0.0, f64::max)
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }
}

/// Builds features for `samples` in order, `EVAL_CHUNK` rows at a time.
fn for_chunks(
    dataset: &Dataset,
    samples: &[PairSample],
    mut f: impl FnMut(usize, Matrix) -> Result<()>,
) -> Result<()> {
    for (i, chunk) in samples.chunks(EVAL_CHUNK).enumerate() {
        f(i * EVAL_CHUNK, dataset.matrix(chunk)?)?;
    }
    Ok(())
}

/// Eval-mode class probabilities for a feature matrix.
pub fn predict_proba(model: &AdepModel, x: &Matrix) -> Result<Matrix> {
    x.expect_cols("model input", model.arch().input_dim)?;
    let mut out = Matrix::zeros(x.rows(), model.arch().classes);
    for start in (0..x.rows()).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..(start + EVAL_CHUNK).min(x.rows())).collect();
        let lp = model.infer_log_probs(&x.select_rows(&rows))?;
        for (k, &r) in rows.iter().enumerate() {
            for (o, v) in out.row_mut(r).iter_mut().zip(lp.row(k)) {
                *o = v.exp();
            }
        }
    }
    Ok(out)
}

/// Eval-mode forward followed by the full metric suite.
pub fn evaluate(model: &AdepModel, x: &Matrix, labels: &[usize]) -> Result<MetricsReport> {
    if labels.len() != x.rows() {
        return Err(AdepError::dim("evaluation labels", x.rows(), labels.len()));
    }
    metrics::evaluate_scores(&predict_proba(model, x)?, labels)
}

/// Applies `score` to the pairs' samples under `ordering` and returns one
/// probability row per scored sample with its labels.
pub fn score_pairs(
    dataset: &Dataset,
    pairs: &[PairSample],
    ordering: EvalOrdering,
    classes: usize,
    score: &dyn Fn(&Matrix) -> Result<Matrix>,
) -> Result<(Matrix, Vec<usize>)> {
    match ordering {
        EvalOrdering::Both => {
            let samples = expand_symmetric(pairs);
            let mut out = Matrix::zeros(samples.len(), classes);
            for_chunks(dataset, &samples, |start, x| {
                let p = score(&x)?;
                for r in 0..p.rows() {
                    out.row_mut(start + r).copy_from_slice(p.row(r));
                }
                Ok(())
            })?;
            Ok((out, Dataset::labels(&samples)))
        }
        EvalOrdering::PairMean => {
            let mirrored: Vec<PairSample> = pairs.iter().map(PairSample::mirrored).collect();
            let mut out = Matrix::zeros(pairs.len(), classes);
            for side in [pairs, &mirrored[..]] {
                for_chunks(dataset, side, |start, x| {
                    let p = score(&x)?;
                    for r in 0..p.rows() {
                        for (o, v) in out.row_mut(start + r).iter_mut().zip(p.row(r)) {
                            *o += 0.5 * v;
                        }
                    }
                    Ok(())
                })?;
            }
            Ok((out, Dataset::labels(pairs)))
        }
    }
}

/// Scores unordered held-out pairs with the trained model.
pub fn evaluate_pairs(
    model: &AdepModel,
    dataset: &Dataset,
    pairs: &[PairSample],
    ordering: EvalOrdering,
) -> Result<MetricsReport> {
    if dataset.pair_width() != model.arch().input_dim {
        return Err(AdepError::dim(
            "dataset pair width",
            model.arch().input_dim,
            dataset.pair_width(),
        ));
    }
    let (p, y) = score_pairs(dataset, pairs, ordering, model.arch().classes, &|x| {
        predict_proba(model, x)
    })?;
    metrics::evaluate_scores(&p, &y)
}

/// Owns one model and everything that advances during training.
pub struct Trainer<'a> {
    config: TrainConfig,
    dataset: &'a Dataset,
    model: AdepModel,
    optimizers: Vec<Adam>,
    dropout: DropoutRngs,
    shuffle_rng: Rng,
    fake_rng: Rng,
    /// Training samples, both orderings.
    samples: Vec<PairSample>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    /// Training pairs are unordered; both orderings are used.
    pub fn new(
        config: &TrainConfig,
        dataset: &'a Dataset,
        train_pairs: &[PairSample],
    ) -> Result<Self> {
        config.validate()?;
        let model = AdepModel::new(config.arch_for(dataset)?, config.seed)?;
        Self::with_model(config, dataset, train_pairs, model)
    }

    pub fn with_model(
        config: &TrainConfig,
        dataset: &'a Dataset,
        train_pairs: &[PairSample],
        model: AdepModel,
    ) -> Result<Self> {
        config.validate()?;
        if model.arch().input_dim != dataset.pair_width() {
            return Err(AdepError::dim(
                "model input",
                model.arch().input_dim,
                dataset.pair_width(),
            ));
        }
        let samples = expand_symmetric(train_pairs);
        if samples.len() < 2 {
            return Err(AdepError::Config("need at least one training pair".into()));
        }
        Ok(Trainer {
            config: *config,
            dataset,
            model,
            optimizers: Subnet::ALL.iter().map(|_| Adam::new(config.adam)).collect(),
            dropout: DropoutRngs::from_seed(config.seed),
            shuffle_rng: rng::stream(config.seed, Stream::Shuffle),
            fake_rng: rng::stream(config.seed, Stream::FakeLatent),
            samples,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &AdepModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut AdepModel {
        &mut self.model
    }

    pub fn into_model(self) -> AdepModel {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    fn step_subnets(&mut self, which: &[Subnet]) -> Result<()> {
        for &s in which {
            let idx = Subnet::ALL
                .iter()
                .position(|&t| t == s)
                .expect("known subnet");
            let mut params = self.model.params_of(&[s]);
            self.optimizers[idx].step(&mut params)?;
        }
        Ok(())
    }

    /// One optimizer update; returns `(ae, cls, adv, predictions)`.
    fn step(&mut self, x: &Matrix, labels: &[usize]) -> Result<(f64, f64, f64, Vec<usize>)> {
        let coeffs = self.config.coefficients();
        let enabled = self.config.discriminator_enabled;
        let latent = self.model.arch().latent;
        self.model.zero_grad();
        let z = self
            .model
            .encode(x, Mode::Train, &mut self.dropout.encoder)?;
        let fake = if enabled {
            Some(sample_fake_latent(
                self.config.fake_latent_strategy,
                z.rows(),
                latent,
                Some(&z),
                &mut self.fake_rng,
            )?)
        } else {
            None
        };
        const GENERATOR: [Subnet; 3] = [Subnet::Encoder, Subnet::Decoder, Subnet::Classifier];
        match self.config.adversarial_mode {
            AdversarialMode::Joint => {
                let (b, pred) = self.model.heads(
                    x,
                    &z,
                    labels,
                    &coeffs,
                    fake.as_ref(),
                    Mode::Train,
                    &mut self.dropout,
                    true,
                )?;
                self.step_subnets(if enabled { &Subnet::ALL } else { &GENERATOR })?;
                Ok((
                    b.autoencoder_loss,
                    b.classifier_loss,
                    b.adversarial_loss,
                    pred,
                ))
            }
            AdversarialMode::Alternating => {
                let adv = match &fake {
                    Some(fake) => {
                        let v = self
                            .model
                            .discriminator_objective(&z, fake, coeffs.gamma, true)?;
                        self.step_subnets(&[Subnet::Discriminator])?;
                        self.model.subnet_mut(Subnet::Discriminator).zero_grad();
                        v
                    }
                    None => 0.0,
                };
                let (ae, cls, _fool, pred) = self.model.generator_objective(
                    x,
                    &z,
                    labels,
                    &coeffs,
                    enabled,
                    &mut self.dropout,
                    true,
                )?;
                self.step_subnets(&GENERATOR)?;
                Ok((ae, cls, adv, pred))
            }
        }
    }

    /// Trains one epoch over a fresh shuffle. A trailing batch with a single
    /// row is skipped since batch normalization needs two.
    pub fn run_epoch(&mut self, validation: Option<&[PairSample]>) -> Result<EpochRecord> {
        let started = Instant::now();
        self.epoch += 1;
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let (mut ae, mut cls, mut adv) = (0.0, 0.0, 0.0);
        let (mut seen, mut correct) = (0usize, 0usize);
        for (b, idx) in order.chunks(self.config.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let batch: Vec<PairSample> = idx.iter().map(|&i| self.samples[i].clone()).collect();
            let x = self.dataset.matrix(&batch)?;
            let labels = Dataset::labels(&batch);
            let (a, c, d, pred) = self.step(&x, &labels)?;
            if !(a.is_finite() && c.is_finite() && d.is_finite()) {
                return Err(AdepError::Divergence {
                    epoch: self.epoch,
                    batch: b,
                    detail: format!("ae {a}, cls {c}, adv {d}"),
                });
            }
            let n = idx.len() as f64;
            ae += a * n;
            cls += c * n;
            adv += d * n;
            seen += idx.len();
            correct += pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
        }
        let n = seen as f64;
        let (ae, cls, adv) = (ae / n, cls / n, adv / n);
        let val_metrics = match validation {
            Some(pairs) => Some(evaluate_pairs(
                &self.model,
                self.dataset,
                pairs,
                self.config.eval_ordering,
            )?),
            None => None,
        };
        Ok(EpochRecord {
            epoch: self.epoch,
            ae_loss: ae,
            cls_loss: cls,
            adv_loss: adv,
            total: self.config.coefficients().combine(ae, cls, adv),
            train_acc: correct as f64 / n,
            val_metrics,
            seconds: started.elapsed().as_secs_f64(),
        })
    }
}

/// Called after every epoch with a run label such as `fold 2 ADEP`.
pub type EpochHook<'a> = Option<&'a (dyn Fn(&str, &EpochRecord) + Sync)>;

/// Trains on `train_pairs` for `config.epochs` epochs. `monitor` pairs are
/// scored after every epoch for the log only.
///
/// With `patience` set, a stratified tenth of the training pairs is held
/// back for early stopping on micro-F1 and the best epoch's parameters are
/// returned.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    train_pairs: &[PairSample],
    monitor: Option<&[PairSample]>,
) -> Result<(AdepModel, TrainHistory)> {
    train_hooked(config, dataset, train_pairs, monitor, "", None)
}

pub fn train_hooked(
    config: &TrainConfig,
    dataset: &Dataset,
    train_pairs: &[PairSample],
    monitor: Option<&[PairSample]>,
    label: &str,
    hook: EpochHook<'_>,
) -> Result<(AdepModel, TrainHistory)> {
    config.validate()?;
    let (fit_pairs, stop_pairs) = match config.patience {
        Some(_) => {
            let split = stratified_kfold(train_pairs, EARLY_STOP_FOLDS, config.seed)?;
            let (fit, hold) = split.partition(train_pairs, 0)?;
            (fit, Some(hold))
        }
        None => (train_pairs.to_vec(), None),
    };
    let mut trainer = Trainer::new(config, dataset, &fit_pairs)?;
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, AdepModel)> = None;
    for _ in 0..config.epochs {
        let validation = stop_pairs.as_deref().or(monitor);
        let record = trainer.run_epoch(validation)?;
        let epoch = record.epoch;
        let score = record
            .val_metrics
            .as_ref()
            .map(|m| m.f1_micro.unwrap_or(0.0));
        if let Some(hook) = hook {
            hook(label, &record);
        }
        history.epochs.push(record);
        if let (Some(patience), Some(score)) = (config.patience, score) {
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, epoch, trainer.model().clone()));
            } else if epoch - best.as_ref().map_or(0, |b| b.1) >= patience {
                break;
            }
        }
    }
    match best {
        Some((_, epoch, model)) => {
            history.best_epoch = Some(epoch);
            Ok((model, history))
        }
        None => Ok((trainer.into_model(), history)),
    }
}

/// Maps `f` over `0..n` on up to `threads` scoped threads, preserving order.
fn parallel_map<T: Send>(
    n: usize,
    threads: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        for (c, part) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            s.spawn(move || {
                for (i, slot) in part.iter_mut().enumerate() {
                    *slot = Some(f(c * chunk + i));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub report: MetricsReport,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub aggregate: MetricsReport,
}

/// k-fold cross-validation over unordered pairs. Folds may train in
/// parallel; each fold's result does not depend on `threads`.
pub fn run_cv(
    config: &TrainConfig,
    dataset: &Dataset,
    threads: usize,
    hook: EpochHook<'_>,
) -> Result<CvResult> {
    config.validate()?;
    let split = stratified_kfold(&dataset.pairs, config.folds, config.seed)?;
    run_cv_split(config, dataset, &split, threads, hook)
}

pub fn run_cv_split(
    config: &TrainConfig,
    dataset: &Dataset,
    split: &FoldSplit,
    threads: usize,
    hook: EpochHook<'_>,
) -> Result<CvResult> {
    let folds = parallel_map(split.k, threads, |fold| {
        let (train_pairs, test_pairs) = split.partition(&dataset.pairs, fold)?;
        let label = format!("fold {fold}");
        let (model, history) = train_hooked(config, dataset, &train_pairs, None, &label, hook)?;
        let report = evaluate_pairs(&model, dataset, &test_pairs, config.eval_ordering)?;
        Ok(FoldResult {
            fold,
            train_pairs: train_pairs.len(),
            test_pairs: test_pairs.len(),
            report,
            history,
        })
    })?;
    let reports: Vec<MetricsReport> = folds.iter().map(|f| f.report.clone()).collect();
    Ok(CvResult {
        aggregate: metrics::aggregate(&reports)?,
        folds,
    })
}

pub const ROW_ADEP: &str = "ADEP";
pub const ROW_NO_DISCRIMINATOR: &str = "ADEP-discriminator";

pub fn latent_row_name(kind: BaselineKind) -> String {
    format!("Latent+{}", kind.label())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub folds: Vec<MetricsReport>,
    pub aggregate: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationResult {
    /// Folds actually run (a prefix of the split).
    pub folds_run: usize,
    pub k: usize,
    pub rows: Vec<AblationRow>,
    /// Training logs of the neural rows, per fold: ADEP, no discriminator,
    /// autoencoder only.
    pub histories: Vec<[TrainHistory; 3]>,
}

impl AblationResult {
    pub fn table_rows(&self) -> Vec<(String, MetricsReport)> {
        self.rows
            .iter()
            .map(|r| (r.method.clone(), r.aggregate.clone()))
            .collect()
    }

    pub fn row(&self, method: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Config for the ablation variants. Every variant keeps the seed, so data
/// order and fold assignment are shared.
pub fn no_discriminator_config(config: &TrainConfig) -> TrainConfig {
    TrainConfig {
        discriminator_enabled: false,
        ..*config
    }
}

/// Autoencoder-only training feeding the classic-classifier rows.
pub fn autoencoder_config(config: &TrainConfig) -> TrainConfig {
    TrainConfig {
        beta: 0.0,
        gamma: 0.0,
        discriminator_enabled: false,
        ..*config
    }
}

/// Latent codes of the given samples in eval mode.
pub fn latents(model: &AdepModel, dataset: &Dataset, samples: &[PairSample]) -> Result<Matrix> {
    let mut out = Matrix::zeros(samples.len(), model.arch().latent);
    for_chunks(dataset, samples, |start, x| {
        let z = model.infer_latent(&x)?;
        for r in 0..z.rows() {
            out.row_mut(start + r).copy_from_slice(z.row(r));
        }
        Ok(())
    })?;
    Ok(out)
}

/// The six-row ablation over the first `max_folds` folds (all when `None`).
pub fn run_ablation(
    config: &TrainConfig,
    dataset: &Dataset,
    max_folds: Option<usize>,
    threads: usize,
    hook: EpochHook<'_>,
) -> Result<AblationResult> {
    config.validate()?;
    let split = stratified_kfold(&dataset.pairs, config.folds, config.seed)?;
    let folds_run = max_folds.unwrap_or(split.k).clamp(1, split.k);
    let per_fold = parallel_map(folds_run, threads, |fold| {
        let (train_pairs, test_pairs) = split.partition(&dataset.pairs, fold)?;
        let mut reports = Vec::with_capacity(6);
        let mut histories = Vec::with_capacity(3);
        for (name, variant) in [
            (ROW_ADEP, *config),
            (ROW_NO_DISCRIMINATOR, no_discriminator_config(config)),
        ] {
            let label = format!("fold {fold} {name}");
            let (model, history) =
                train_hooked(&variant, dataset, &train_pairs, None, &label, hook)?;
            reports.push(evaluate_pairs(
                &model,
                dataset,
                &test_pairs,
                config.eval_ordering,
            )?);
            histories.push(history);
        }
        let label = format!("fold {fold} autoencoder");
        let (ae, history) = train_hooked(
            &autoencoder_config(config),
            dataset,
            &train_pairs,
            None,
            &label,
            hook,
        )?;
        histories.push(history);
        let train_samples = expand_symmetric(&train_pairs);
        let z_train = latents(&ae, dataset, &train_samples)?;
        let y_train = Dataset::labels(&train_samples);
        for kind in BaselineKind::ALL {
            let model = fit_baseline(
                kind,
                &z_train,
                &y_train,
                dataset.classes,
                &config.baseline,
                config.seed,
                1,
            )?;
            let score = |x: &Matrix| model.predict_proba(&ae.infer_latent(x)?);
            let (p, y) = score_pairs(
                dataset,
                &test_pairs,
                config.eval_ordering,
                dataset.classes,
                &score,
            )?;
            reports.push(metrics::evaluate_scores(&p, &y)?);
        }
        let histories: [TrainHistory; 3] = histories.try_into().expect("three neural variants");
        Ok((reports, histories))
    })?;
    let names = [ROW_ADEP.to_string(), ROW_NO_DISCRIMINATOR.to_string()]
        .into_iter()
        .chain(BaselineKind::ALL.into_iter().map(latent_row_name));
    let mut rows = Vec::new();
    for (i, method) in names.enumerate() {
        let folds: Vec<MetricsReport> = per_fold.iter().map(|(r, _)| r[i].clone()).collect();
        rows.push(AblationRow {
            method,
            aggregate: metrics::aggregate(&folds)?,
            folds,
        });
    }
    Ok(AblationResult {
        folds_run,
        k: split.k,
        rows,
        histories: per_fold.into_iter().map(|(_, h)| h).collect(),
    })
}
