use std::path::PathBuf;

use adep::baselines::BaselineKind;
use adep::data::SynthConfig;
use adep::metrics::Averaging;
use adep::model::{AdversarialMode, ArchSize, FakeLatentStrategy};
use adep::train::{EvalOrdering, TrainConfig};
use adep::AdepError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "adep",
    version,
    about = "Discriminator-enhanced encoder-decoder for DDI event prediction"
)]
pub struct Cli {
    /// JSON config (TrainConfig or SynthConfig field names); flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Output directory: the dataset directory for `synth`, the parent of
    /// run directories otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Machine-readable JSON on stdout and for errors.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Load and check a dataset directory.
    ValidateData(ValidateArgs),
    /// Train one model, optionally holding out one fold.
    Train(TrainArgs),
    /// k-fold cross-validation.
    Cv(CvArgs),
    /// Discriminator-removal and classic-classifier ablation table.
    Ablate(AblateArgs),
    /// Classic classifiers on raw pair vectors.
    Baseline(BaselineArgs),
    /// Finite-difference check of the full objective on a small model.
    Gradcheck(GradcheckArgs),
    /// Render result tables from finished runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub drugs: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Modality widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long)]
    pub imbalance: Option<f64>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub flip: Option<f64>,
}

impl SynthArgs {
    pub fn apply(&self, c: &mut SynthConfig, seed: Option<u64>) {
        set(&mut c.drugs, self.drugs);
        set(&mut c.classes, self.classes);
        set(&mut c.pairs, self.pairs);
        set(&mut c.widths, self.widths.clone());
        set(&mut c.imbalance, self.imbalance);
        set(&mut c.density, self.density);
        set(&mut c.flip, self.flip);
        set(&mut c.seed, seed);
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Shape {
    Ds1,
    Ds2,
    Ds3,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub dir: PathBuf,
    /// Also require the modality layout of a published dataset.
    #[arg(long, value_enum)]
    pub expect: Option<Shape>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Joint,
    Alternating,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FakeArg {
    StandardNormal,
    EmpiricalMoments,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderingArg {
    Both,
    PairMean,
}

/// `production`, `mini`, or `HIDDENxLATENT` such as `512x128`.
pub fn parse_arch(s: &str) -> Result<ArchSize, String> {
    match s {
        "production" => Ok(ArchSize::Production),
        "mini" => Ok(ArchSize::Mini),
        _ => {
            let (h, l) = s
                .split_once('x')
                .ok_or_else(|| format!("expected production, mini or HIDDENxLATENT, got `{s}`"))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|e| format!("bad width `{v}`: {e}"))
            };
            Ok(ArchSize::Scaled {
                hidden: parse(h)?,
                latent: parse(l)?,
            })
        }
    }
}

/// Flags mirroring [`TrainConfig`].
#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub adversarial_mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub fake_latent_strategy: Option<FakeArg>,
    #[arg(long)]
    pub no_discriminator: bool,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<ArchSize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub eval_ordering: Option<OrderingArg>,
}

impl ModelFlags {
    pub fn apply(&self, c: &mut TrainConfig, seed: Option<u64>) {
        set(&mut c.alpha, self.alpha);
        set(&mut c.beta, self.beta);
        set(&mut c.gamma, self.gamma);
        set(&mut c.epochs, self.epochs);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.adam.lr, self.lr);
        set(
            &mut c.adversarial_mode,
            self.adversarial_mode.map(|m| match m {
                ModeArg::Joint => AdversarialMode::Joint,
                ModeArg::Alternating => AdversarialMode::Alternating,
            }),
        );
        set(
            &mut c.fake_latent_strategy,
            self.fake_latent_strategy.map(|f| match f {
                FakeArg::StandardNormal => FakeLatentStrategy::StandardNormal,
                FakeArg::EmpiricalMoments => FakeLatentStrategy::EmpiricalMoments,
            }),
        );
        if self.no_discriminator {
            c.discriminator_enabled = false;
        }
        if self.patience.is_some() {
            c.patience = self.patience;
        }
        set(&mut c.arch, self.arch);
        set(&mut c.folds, self.folds);
        set(
            &mut c.eval_ordering,
            self.eval_ordering.map(|o| match o {
                OrderingArg::Both => EvalOrdering::Both,
                OrderingArg::PairMean => EvalOrdering::PairMean,
            }),
        );
        set(&mut c.seed, seed);
    }
}

/// Flags mirroring the classic-classifier settings.
#[derive(Debug, Args, Default)]
pub struct BaselineFlags {
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long)]
    pub logreg_iterations: Option<usize>,
    #[arg(long)]
    pub tree_max_depth: Option<usize>,
    #[arg(long)]
    pub forest_trees: Option<usize>,
}

impl BaselineFlags {
    pub fn apply(&self, c: &mut TrainConfig) {
        set(&mut c.baseline.knn.k, self.knn_k);
        set(&mut c.baseline.logreg.iterations, self.logreg_iterations);
        set(&mut c.baseline.tree.max_depth, self.tree_max_depth);
        if let Some(d) = self.tree_max_depth {
            c.baseline.forest.max_depth = d;
        }
        set(&mut c.baseline.forest.trees, self.forest_trees);
    }
}

#[derive(Debug, Args)]
pub struct RunFlags {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory name under --out (default: the subcommand name).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Hold out this fold of the stratified split and score it.
    #[arg(long)]
    pub fold: Option<usize>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Run only the first N folds of the split.
    #[arg(long)]
    pub max_folds: Option<usize>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub baseline: BaselineFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Knn,
    Logreg,
    Tree,
    Forest,
    All,
}

impl KindArg {
    pub fn kinds(self) -> Vec<BaselineKind> {
        match self {
            KindArg::Knn => vec![BaselineKind::Knn],
            KindArg::Logreg => vec![BaselineKind::Logreg],
            KindArg::Tree => vec![BaselineKind::Tree],
            KindArg::Forest => vec![BaselineKind::Forest],
            KindArg::All => BaselineKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long, value_enum, default_value = "all")]
    pub kind: KindArg,
    /// Score a single held-out fold and save the fitted models.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[command(flatten)]
    pub baseline: BaselineFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CheckMode {
    Joint,
    Alternating,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SubnetArg {
    Encoder,
    Decoder,
    Classifier,
    Discriminator,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = parse_arch, default_value = "mini")]
    pub arch: ArchSize,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: CheckMode,
    #[arg(long, default_value_t = 12)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 6)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Negative control: negate the backward pass of one layer.
    #[arg(long, value_enum, requires = "flip_layer")]
    pub flip_subnet: Option<SubnetArg>,
    #[arg(long, requires = "flip_subnet")]
    pub flip_layer: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories containing metrics.json.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Averaging for the precision, recall and F columns.
    #[arg(long, value_enum, default_value = "micro")]
    pub prf: AveragingArg,
    /// Averaging for the AUROC and AUPRC columns.
    #[arg(long, value_enum, default_value = "macro")]
    pub auc: AveragingArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AveragingArg {
    Micro,
    Macro,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Micro => Averaging::Micro,
            AveragingArg::Macro => Averaging::Macro,
        }
    }
}

pub fn usage(message: impl Into<String>) -> AdepError {
    AdepError::Config(message.into())
}
