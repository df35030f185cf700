use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeConfig};
use crate::nn::Matrix;
use crate::rng::{indexed_stream, Stream};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `round(sqrt(width))`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: 12,
            min_leaf: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub classes: usize,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

fn fit_one(
    x: &Matrix,
    y: &[usize],
    classes: usize,
    config: &ForestConfig,
    seed: u64,
    index: usize,
) -> Tree {
    let mut rng = indexed_stream(seed, Stream::Baseline, index as u64);
    let n = x.rows();
    let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let features = config
        .max_features
        .unwrap_or_else(|| (x.cols() as f64).sqrt().round() as usize)
        .clamp(1, x.cols());
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
    };
    Tree::fit_rows(
        x,
        y,
        classes,
        &tree_config,
        &rows,
        Some((features, &mut rng)),
    )
}

impl Forest {
    /// Tree `t` draws its bootstrap sample and split features from its own
    /// indexed stream, so the result does not depend on `threads`.
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        classes: usize,
        config: &ForestConfig,
        seed: u64,
        threads: usize,
    ) -> Self {
        let threads = threads.clamp(1, config.trees.max(1));
        let mut trees: Vec<Option<Tree>> = vec![None; config.trees];
        if threads == 1 {
            for (t, slot) in trees.iter_mut().enumerate() {
                *slot = Some(fit_one(x, y, classes, config, seed, t));
            }
        } else {
            let chunk = config.trees.div_ceil(threads);
            std::thread::scope(|s| {
                for (c, slots) in trees.chunks_mut(chunk).enumerate() {
                    s.spawn(move || {
                        for (i, slot) in slots.iter_mut().enumerate() {
                            *slot = Some(fit_one(x, y, classes, config, seed, c * chunk + i));
                        }
                    });
                }
            });
        }
        Forest {
            classes,
            seed,
            trees: trees
                .into_iter()
                .map(|t| t.expect("every slot filled"))
                .collect(),
        }
    }

    /// Mean of the per-tree leaf distributions.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(x.rows(), self.classes);
        for tree in &self.trees {
            out.add_assign(&tree.predict_proba(x)?)?;
        }
        out.scale(1.0 / self.trees.len() as f64);
        Ok(out)
    }
}
