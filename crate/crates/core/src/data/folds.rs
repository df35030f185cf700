//! Stratified k-fold assignment over unordered pairs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::PairSample;
use crate::rng::{stream, Stream};
use crate::{AdepError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    /// origin_pair id to fold index.
    pub assignment: BTreeMap<usize, usize>,
}

/// Classes are shuffled independently and dealt round-robin; the starting
/// fold carries over from one class to the next so fold sizes stay within
/// one of each other as well.
pub fn stratified_kfold(pairs: &[PairSample], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(AdepError::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in pairs {
        by_class.entry(p.event).or_default().push(p.origin_pair);
    }
    for ids in by_class.values_mut() {
        ids.sort_unstable();
        ids.dedup();
    }
    let n: usize = by_class.values().map(Vec::len).sum();
    if n == 0 {
        return Err(AdepError::Config("k-fold needs at least one pair".into()));
    }
    if k > n {
        return Err(AdepError::Config(format!(
            "k = {k} exceeds the {n} available pairs"
        )));
    }
    let mut rng = stream(seed, Stream::Folds);
    let mut assignment = BTreeMap::new();
    let mut next = 0;
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
        for &id in ids.iter() {
            if assignment.insert(id, next).is_some() {
                return Err(AdepError::Config(format!(
                    "pair id {id} carries more than one event"
                )));
            }
            next = (next + 1) % k;
        }
    }
    Ok(FoldSplit { k, assignment })
}

impl FoldSplit {
    pub fn fold_of(&self, origin_pair: usize) -> Option<usize> {
        self.assignment.get(&origin_pair).copied()
    }

    /// (training, held-out) pairs for `fold`. Pairs without an assignment
    /// are an error.
    pub fn partition(
        &self,
        pairs: &[PairSample],
        fold: usize,
    ) -> Result<(Vec<PairSample>, Vec<PairSample>)> {
        if fold >= self.k {
            return Err(AdepError::Config(format!(
                "fold {fold} out of range for k = {}",
                self.k
            )));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for p in pairs {
            match self.fold_of(p.origin_pair) {
                Some(f) if f == fold => test.push(p.clone()),
                Some(_) => train.push(p.clone()),
                None => {
                    return Err(AdepError::Config(format!(
                        "pair id {} has no fold assignment",
                        p.origin_pair
                    )))
                }
            }
        }
        Ok((train, test))
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}
