//! Classic classifiers for raw pair vectors or frozen latents.

mod forest;
mod knn;
mod logreg;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{Forest, ForestConfig};
pub use knn::{Knn, KnnConfig};
pub use logreg::{LogReg, LogRegConfig};
pub use tree::{Tree, TreeConfig};

use crate::checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointManifest, CheckpointMeta, Tensor, TensorSet,
};
use crate::nn::Matrix;
use crate::{AdepError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Knn,
    Logreg,
    Tree,
    Forest,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Knn,
        BaselineKind::Logreg,
        BaselineKind::Tree,
        BaselineKind::Forest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Knn => "knn",
            BaselineKind::Logreg => "logreg",
            BaselineKind::Tree => "tree",
            BaselineKind::Forest => "forest",
        }
    }

    /// Abbreviation used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Knn => "KNN",
            BaselineKind::Logreg => "LR",
            BaselineKind::Tree => "DT",
            BaselineKind::Forest => "RF",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                AdepError::Config(format!(
                    "unknown baseline `{s}` (knn, logreg, tree, forest)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub knn: KnnConfig,
    pub logreg: LogRegConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AdepError::Config(m.into()));
        if self.knn.k == 0 {
            return bad("knn.k must be positive");
        }
        if !(self.logreg.lr > 0.0 && self.logreg.lr.is_finite())
            || self.logreg.l2.is_nan()
            || self.logreg.l2 < 0.0
        {
            return bad("logreg.lr must be positive and logreg.l2 non-negative");
        }
        if self.forest.trees == 0 {
            return bad("forest.trees must be positive");
        }
        if self.forest.max_features == Some(0) {
            return bad("forest.max_features must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Knn(Knn),
    Logreg(LogReg),
    Tree(Tree),
    Forest(Forest),
}

pub fn fit_baseline(
    kind: BaselineKind,
    x: &Matrix,
    y: &[usize],
    classes: usize,
    config: &BaselineConfig,
    seed: u64,
    threads: usize,
) -> Result<BaselineModel> {
    config.validate()?;
    if x.rows() == 0 {
        return Err(AdepError::Config(
            "cannot fit a baseline on an empty training set".into(),
        ));
    }
    if x.rows() != y.len() {
        return Err(AdepError::dim("baseline labels", x.rows(), y.len()));
    }
    if classes < 2 {
        return Err(AdepError::Config(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if let Some(&label) = y.iter().find(|&&l| l >= classes) {
        return Err(AdepError::Label { label, classes });
    }
    Ok(match kind {
        BaselineKind::Knn => BaselineModel::Knn(Knn::fit(x, y, classes, &config.knn)),
        BaselineKind::Logreg => BaselineModel::Logreg(LogReg::fit(x, y, classes, &config.logreg)?),
        BaselineKind::Tree => BaselineModel::Tree(Tree::fit(x, y, classes, &config.tree)),
        BaselineKind::Forest => {
            BaselineModel::Forest(Forest::fit(x, y, classes, &config.forest, seed, threads))
        }
    })
}

fn tree_tensors(prefix: &str, t: &Tree) -> Vec<Tensor> {
    let n = t.node_count();
    vec![
        Tensor::i64(format!("{prefix}feature"), vec![n], t.feature.clone()),
        Tensor::f64(format!("{prefix}threshold"), vec![n], t.threshold.clone()),
        Tensor::i64(format!("{prefix}left"), vec![n], t.left.clone()),
        Tensor::i64(format!("{prefix}right"), vec![n], t.right.clone()),
        Tensor::f64(
            format!("{prefix}value"),
            vec![n, t.classes],
            t.value.clone(),
        ),
    ]
}

fn read_tree(set: &mut TensorSet, prefix: &str, classes: usize, width: usize) -> Result<Tree> {
    let n = set
        .shape(&format!("{prefix}feature"))?
        .first()
        .copied()
        .unwrap_or(0);
    let tree = Tree {
        classes,
        width,
        feature: set.take_i64(&format!("{prefix}feature"), &[n])?,
        threshold: set.take_f64(&format!("{prefix}threshold"), &[n])?,
        left: set.take_i64(&format!("{prefix}left"), &[n])?,
        right: set.take_i64(&format!("{prefix}right"), &[n])?,
        value: set.take_f64(&format!("{prefix}value"), &[n, classes])?,
    };
    tree.validate()?;
    Ok(tree)
}

/// Header stored in the checkpoint's `arch` field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineHeader {
    kind: BaselineKind,
    classes: usize,
    width: usize,
    #[serde(default)]
    k: usize,
    #[serde(default)]
    trees: usize,
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Knn(_) => BaselineKind::Knn,
            BaselineModel::Logreg(_) => BaselineKind::Logreg,
            BaselineModel::Tree(_) => BaselineKind::Tree,
            BaselineModel::Forest(_) => BaselineKind::Forest,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            BaselineModel::Knn(m) => m.classes,
            BaselineModel::Logreg(m) => m.bias.len(),
            BaselineModel::Tree(m) => m.classes,
            BaselineModel::Forest(m) => m.classes,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            BaselineModel::Knn(m) => m.train.cols(),
            BaselineModel::Logreg(m) => m.weight.cols(),
            BaselineModel::Tree(m) => m.width,
            BaselineModel::Forest(m) => m.trees[0].width,
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("baseline input", self.width())?;
        match self {
            BaselineModel::Knn(m) => m.predict_proba(x),
            BaselineModel::Logreg(m) => m.predict_proba(x),
            BaselineModel::Tree(m) => m.predict_proba(x),
            BaselineModel::Forest(m) => m.predict_proba(x),
        }
    }

    /// Labels (row argmax, lowest index on ties) and probabilities.
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<usize>, Matrix)> {
        let p = self.predict_proba(x)?;
        Ok((p.argmax_rows(), p))
    }

    fn header(&self) -> BaselineHeader {
        BaselineHeader {
            kind: self.kind(),
            classes: self.classes(),
            width: self.width(),
            k: if let BaselineModel::Knn(m) = self {
                m.k
            } else {
                0
            },
            trees: if let BaselineModel::Forest(m) = self {
                m.trees.len()
            } else {
                0
            },
        }
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        match self {
            BaselineModel::Knn(m) => vec![
                Tensor::f64(
                    "train",
                    vec![m.train.rows(), m.train.cols()],
                    m.train.data().to_vec(),
                ),
                Tensor::i64(
                    "labels",
                    vec![m.labels.len()],
                    m.labels.iter().map(|&l| l as i64).collect(),
                ),
            ],
            BaselineModel::Logreg(m) => vec![
                Tensor::f64(
                    "weight",
                    vec![m.weight.rows(), m.weight.cols()],
                    m.weight.data().to_vec(),
                ),
                Tensor::f64("bias", vec![m.bias.len()], m.bias.clone()),
                Tensor::f64("mean", vec![m.mean.len()], m.mean.clone()),
                Tensor::f64("scale", vec![m.scale.len()], m.scale.clone()),
            ],
            BaselineModel::Tree(t) => tree_tensors("tree.", t),
            BaselineModel::Forest(f) => f
                .trees
                .iter()
                .enumerate()
                .flat_map(|(i, t)| tree_tensors(&format!("tree{i}."), t))
                .collect(),
        }
    }

    pub fn save(
        &self,
        dir: &Path,
        stem: &str,
        seed: u64,
        config_hash: &str,
    ) -> Result<CheckpointManifest> {
        write_checkpoint(
            dir,
            stem,
            CheckpointMeta {
                kind: &format!("baseline:{}", self.kind().name()),
                arch: serde_json::to_value(self.header())?,
                seed,
                config_hash,
            },
            &self.tensors(),
        )
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let (manifest, mut set) = read_checkpoint(dir, stem)?;
        let h: BaselineHeader = serde_json::from_value(manifest.arch.clone())
            .map_err(|e| AdepError::Checkpoint(format!("bad baseline header: {e}")))?;
        if manifest.kind != format!("baseline:{}", h.kind.name()) {
            return Err(AdepError::Checkpoint(format!(
                "checkpoint kind `{}` is not a baseline",
                manifest.kind
            )));
        }
        let (c, d) = (h.classes, h.width);
        let model = match h.kind {
            BaselineKind::Knn => {
                let n = set.shape("train")?.first().copied().unwrap_or(0);
                let train = Matrix::from_vec(n, d, set.take_f64("train", &[n, d])?)?;
                let labels = set.take_i64("labels", &[n])?;
                if labels.iter().any(|&l| l < 0 || l as usize >= c) {
                    return Err(AdepError::Checkpoint("knn label out of range".into()));
                }
                BaselineModel::Knn(Knn {
                    k: h.k,
                    classes: c,
                    train,
                    labels: labels.into_iter().map(|l| l as usize).collect(),
                })
            }
            BaselineKind::Logreg => BaselineModel::Logreg(LogReg {
                weight: Matrix::from_vec(c, d, set.take_f64("weight", &[c, d])?)?,
                bias: set.take_f64("bias", &[c])?,
                mean: set.take_f64("mean", &[d])?,
                scale: set.take_f64("scale", &[d])?,
            }),
            BaselineKind::Tree => BaselineModel::Tree(read_tree(&mut set, "tree.", c, d)?),
            BaselineKind::Forest => {
                let trees = (0..h.trees)
                    .map(|i| read_tree(&mut set, &format!("tree{i}."), c, d))
                    .collect::<Result<Vec<_>>>()?;
                if trees.is_empty() {
                    return Err(AdepError::Checkpoint("forest without trees".into()));
                }
                BaselineModel::Forest(Forest {
                    classes: c,
                    seed: manifest.seed,
                    trees,
                })
            }
        };
        set.finish()?;
        Ok(model)
    }
}
