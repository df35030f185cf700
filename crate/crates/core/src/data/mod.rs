//! Datasets: feature tables, labelled pairs, folds and the synthetic
//! generator.
//!
//! A dataset directory holds `features.jsonl`, `interactions.tsv`, an
//! optional `events.tsv` and an optional `manifest.json`. When the manifest
//! is present its file digests and counts are enforced on load.

mod features;
mod folds;
mod pairs;
pub mod synth;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use features::{DrugFeatureTable, Modality};
pub use folds::{stratified_kfold, FoldSplit};
pub use pairs::{
    class_counts, expand_symmetric, load_events, load_interactions, validate_pairs, write_events,
    write_interactions, PairSample,
};
pub use synth::{gen_synthetic, power_law_counts, SynthConfig};

use crate::nn::Matrix;
use crate::{AdepError, Result};

pub const FEATURES_FILE: &str = "features.jsonl";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const EVENTS_FILE: &str = "events.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Modality widths of the three published benchmark datasets.
pub const DS1_MODALITIES: [(&str, usize); 5] = [
    ("side_effects", 9991),
    ("targets", 1162),
    ("enzymes", 202),
    ("substructures", 881),
    ("pathways", 957),
];
pub const DS2_MODALITIES: [(&str, usize); 3] =
    [("targets", 1651), ("enzymes", 316), ("substructures", 2040)];
pub const DS3_MODALITIES: [(&str, usize); 2] = [("targets", 10184), ("substructures", 8934)];

pub fn modalities_of(spec: &[(&str, usize)]) -> Vec<Modality> {
    spec.iter()
        .map(|&(name, width)| Modality {
            name: name.to_string(),
            width,
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub table: DrugFeatureTable,
    /// Unordered pairs, one per origin id; mirrored orderings are produced
    /// per fold by [`expand_symmetric`].
    pub pairs: Vec<PairSample>,
    pub classes: usize,
    pub event_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub classes: usize,
    pub pairs: usize,
    pub drugs: usize,
    pub pair_width: usize,
    pub files: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub classes: usize,
    pub pairs: usize,
    pub drugs: usize,
    pub pair_width: usize,
    pub class_counts: Vec<usize>,
    pub manifest_checked: bool,
}

impl Dataset {
    pub fn new(
        table: DrugFeatureTable,
        pairs: Vec<PairSample>,
        classes: usize,
        event_names: Vec<String>,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(AdepError::Config(format!(
                "a dataset needs at least 2 classes, got {classes}"
            )));
        }
        if !event_names.is_empty() && event_names.len() != classes {
            return Err(AdepError::Config(format!(
                "{} event names for {classes} classes",
                event_names.len()
            )));
        }
        validate_pairs(&pairs, classes)?;
        for p in &pairs {
            for d in [&p.drug_a, &p.drug_b] {
                if !table.contains(d) {
                    return Err(AdepError::UnknownDrug(d.clone()));
                }
            }
        }
        Ok(Dataset {
            table,
            pairs,
            classes,
            event_names,
        })
    }

    pub fn pair_width(&self) -> usize {
        self.table.pair_width()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.pairs, self.classes)
    }

    /// Dense pair vectors, one row per sample in order.
    pub fn matrix(&self, samples: &[PairSample]) -> Result<Matrix> {
        let w = self.pair_width();
        let mut m = Matrix::zeros(samples.len(), w);
        for (i, s) in samples.iter().enumerate() {
            self.table
                .write_pair_vector(&s.drug_a, &s.drug_b, m.row_mut(i))?;
        }
        Ok(m)
    }

    pub fn labels(samples: &[PairSample]) -> Vec<usize> {
        samples.iter().map(|s| s.event).collect()
    }

    pub fn summary(&self, manifest_checked: bool) -> DatasetSummary {
        DatasetSummary {
            classes: self.classes,
            pairs: self.pairs.len(),
            drugs: self.table.len(),
            pair_width: self.pair_width(),
            class_counts: self.class_counts(),
            manifest_checked,
        }
    }

    /// Writes the dataset files plus a manifest with their digests.
    pub fn save(&self, dir: &Path, synth: Option<&SynthConfig>) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir).map_err(|e| AdepError::io(dir, e))?;
        self.table.write_jsonl(&dir.join(FEATURES_FILE))?;
        write_interactions(&dir.join(INTERACTIONS_FILE), &self.pairs)?;
        let mut names = vec![FEATURES_FILE, INTERACTIONS_FILE];
        if !self.event_names.is_empty() {
            write_events(&dir.join(EVENTS_FILE), &self.event_names)?;
            names.push(EVENTS_FILE);
        }
        let mut files = BTreeMap::new();
        for name in names {
            files.insert(name.to_string(), file_digest(&dir.join(name))?);
        }
        let manifest = DatasetManifest {
            classes: self.classes,
            pairs: self.pairs.len(),
            drugs: self.table.len(),
            pair_width: self.pair_width(),
            files,
            synth: synth.cloned(),
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| AdepError::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self::load_checked(dir)?.0)
    }

    /// Loads the dataset and reports whether a manifest was verified.
    pub fn load_checked(dir: &Path) -> Result<(Self, bool)> {
        if !dir.is_dir() {
            return Err(AdepError::Config(format!(
                "dataset directory {} does not exist",
                dir.display()
            )));
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Option<DatasetManifest> = if manifest_path.exists() {
            let text = std::fs::read_to_string(&manifest_path)
                .map_err(|e| AdepError::io(&manifest_path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| AdepError::Parse {
                path: manifest_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?)
        } else {
            None
        };
        if let Some(m) = &manifest {
            for (name, expected) in &m.files {
                let actual = file_digest(&dir.join(name))?;
                if &actual != expected {
                    return Err(AdepError::Config(format!(
                        "{name} does not match its manifest digest"
                    )));
                }
            }
        }
        let table = DrugFeatureTable::load_jsonl(&dir.join(FEATURES_FILE))?;
        let pairs = load_interactions(&dir.join(INTERACTIONS_FILE))?;
        let events_path = dir.join(EVENTS_FILE);
        let event_names = if events_path.exists() {
            load_events(&events_path)?
        } else {
            Vec::new()
        };
        let classes = match (&manifest, event_names.len()) {
            (Some(m), _) => m.classes,
            (None, n) if n > 0 => n,
            (None, _) => pairs.iter().map(|p| p.event + 1).max().unwrap_or(0),
        };
        let dataset = Dataset::new(table, pairs, classes, event_names)?;
        if let Some(m) = &manifest {
            let found = (
                dataset.pairs.len(),
                dataset.table.len(),
                dataset.pair_width(),
            );
            if found != (m.pairs, m.drugs, m.pair_width) {
                return Err(AdepError::Config(format!(
                    "manifest declares (pairs, drugs, width) = ({}, {}, {}) but files hold {found:?}",
                    m.pairs, m.drugs, m.pair_width
                )));
            }
        }
        Ok((dataset, manifest.is_some()))
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| AdepError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
