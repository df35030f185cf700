//! Prototype-plus-noise synthetic interaction datasets.
//!
//! Drugs are dealt round-robin into `G` groups, the smallest `G` with
//! `G(G+1)/2 >= classes`. Each group owns a random prototype bit vector and
//! each drug is its group prototype with every bit flipped independently
//! with probability `flip`. Every class is tied to one unordered group pair,
//! cross-group pairs first, so the class prototype in pair space is the
//! concatenation of two group prototypes.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dataset, DrugFeatureTable, Modality, PairSample};
use crate::rng::{stream, Stream};
use crate::{AdepError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub drugs: usize,
    pub classes: usize,
    pub pairs: usize,
    pub widths: Vec<usize>,
    /// Class `c` receives a share proportional to `(c + 1)^-imbalance`.
    pub imbalance: f64,
    pub density: f64,
    pub flip: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            drugs: 200,
            classes: 8,
            pairs: 4000,
            widths: vec![64, 32, 32],
            imbalance: 1.5,
            density: 0.2,
            flip: 0.4,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AdepError::Config(m));
        if self.drugs < 2 {
            return bad(format!("need at least 2 drugs, got {}", self.drugs));
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.pairs < self.classes {
            return bad(format!(
                "{} pairs cannot cover {} classes",
                self.pairs, self.classes
            ));
        }
        let capacity = self.drugs * (self.drugs - 1) / 2;
        if self.pairs > capacity {
            return bad(format!(
                "{} pairs requested but {} drugs only form {capacity} distinct pairs",
                self.pairs, self.drugs
            ));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("modality widths must be non-empty and positive".into());
        }
        if !(self.imbalance.is_finite() && self.imbalance >= 0.0) {
            return bad(format!(
                "imbalance exponent must be finite and >= 0, got {}",
                self.imbalance
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density must lie in (0, 1], got {}", self.density));
        }
        if !(self.flip >= 0.0 && self.flip < 0.5) {
            return bad(format!(
                "flip probability must lie in [0, 0.5), got {}",
                self.flip
            ));
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        (1..)
            .find(|g| g * (g + 1) / 2 >= self.classes)
            .expect("classes is finite")
    }
}

/// Largest-remainder allocation of `total` over `classes` with weights
/// `(c + 1)^-exponent`. Remainder ties go to the lower class index.
pub fn power_law_counts(total: usize, classes: usize, exponent: f64) -> Result<Vec<usize>> {
    if classes == 0 {
        return Err(AdepError::Config("no classes to allocate".into()));
    }
    let weights: Vec<f64> = (0..classes)
        .map(|c| ((c + 1) as f64).powf(-exponent))
        .collect();
    let sum: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let short = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(AdepError::Config(format!(
            "{total} pairs leave class {c} empty at imbalance exponent {exponent}"
        )));
    }
    Ok(counts)
}

/// Group pairs in class order: all (i, j) with i < j, then the diagonal.
pub fn class_group_pairs(groups: usize, classes: usize) -> Vec<(usize, usize)> {
    let cross = (0..groups).flat_map(|i| (i + 1..groups).map(move |j| (i, j)));
    let diagonal = (0..groups).map(|i| (i, i));
    cross.chain(diagonal).take(classes).collect()
}

pub fn drug_name(index: usize) -> String {
    format!("D{index:04}")
}

pub fn gen_synthetic(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let counts = power_law_counts(config.pairs, config.classes, config.imbalance)?;
    let groups = config.groups();
    let width: usize = config.widths.iter().sum();
    let mut rng = stream(config.seed, Stream::Synth);

    let prototypes: Vec<Vec<bool>> = (0..groups)
        .map(|_| (0..width).map(|_| rng.gen_bool(config.density)).collect())
        .collect();
    let modalities: Vec<Modality> = config
        .widths
        .iter()
        .enumerate()
        .map(|(i, &w)| Modality {
            name: format!("m{i}"),
            width: w,
        })
        .collect();
    let mut table = DrugFeatureTable::new(modalities)?;
    let mut members = vec![Vec::new(); groups];
    for d in 0..config.drugs {
        let g = d % groups;
        members[g].push(d);
        let bits: Vec<bool> = prototypes[g]
            .iter()
            .map(|&b| {
                if config.flip > 0.0 && rng.gen_bool(config.flip) {
                    !b
                } else {
                    b
                }
            })
            .collect();
        let name = drug_name(d);
        table.add_drug(&name);
        let mut offset = 0;
        for m in 0..config.widths.len() {
            let w = config.widths[m];
            let set: Vec<usize> = (0..w).filter(|&i| bits[offset + i]).collect();
            table.set_indices(&name, &format!("m{m}"), &set)?;
            offset += w;
        }
    }

    let mut pairs = Vec::with_capacity(config.pairs);
    for (c, &(ga, gb)) in class_group_pairs(groups, config.classes).iter().enumerate() {
        let mut candidates: Vec<(usize, usize)> = if ga == gb {
            let m = &members[ga];
            (0..m.len())
                .flat_map(|i| (i + 1..m.len()).map(move |j| (m[i], m[j])))
                .collect()
        } else {
            members[ga]
                .iter()
                .flat_map(|&a| members[gb].iter().map(move |&b| (a, b)))
                .collect()
        };
        if candidates.len() < counts[c] {
            return Err(AdepError::Config(format!(
                "class {c} needs {} pairs but its drug groups only form {}; add drugs",
                counts[c],
                candidates.len()
            )));
        }
        candidates.shuffle(&mut rng);
        pairs.extend(candidates[..counts[c]].iter().map(|&(a, b)| (a, b, c)));
    }
    pairs.shuffle(&mut rng);
    let pairs = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (a, b, c))| PairSample {
            drug_a: drug_name(a),
            drug_b: drug_name(b),
            event: c,
            origin_pair: i,
        })
        .collect();
    let event_names = class_group_pairs(groups, config.classes)
        .iter()
        .map(|(a, b)| format!("group {a} x group {b}"))
        .collect();
    Dataset::new(table, pairs, config.classes, event_names)
}
