//! Per-drug sparse binary feature tables and the `features.jsonl` format.
//!
//! The first line declares the modalities in their fixed order:
//!
//! ```text
//! {"modalities":[{"name":"side_effects","width":9991},{"name":"targets","width":1162}]}
//! {"drug_id":"DB00001","modality":"targets","indices":[3,17,980]}
//! ```
//!
//! Every following line lists the set bits of one drug in one modality.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{AdepError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modality {
    pub name: String,
    pub width: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    modalities: Vec<Modality>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    drug_id: String,
    modality: String,
    indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrugFeatureTable {
    modalities: Vec<Modality>,
    offsets: Vec<usize>,
    /// Per drug, one sorted index set per modality.
    drugs: BTreeMap<String, Vec<Vec<u32>>>,
}

impl DrugFeatureTable {
    pub fn new(modalities: Vec<Modality>) -> Result<Self> {
        if modalities.is_empty() {
            return Err(AdepError::Config(
                "a feature table needs at least one modality".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(modalities.len());
        let mut total = 0;
        for (i, m) in modalities.iter().enumerate() {
            if m.width == 0 {
                return Err(AdepError::Config(format!(
                    "modality `{}` has zero width",
                    m.name
                )));
            }
            if modalities[..i].iter().any(|o| o.name == m.name) {
                return Err(AdepError::Config(format!(
                    "modality `{}` declared twice",
                    m.name
                )));
            }
            offsets.push(total);
            total += m.width;
        }
        Ok(DrugFeatureTable {
            modalities,
            offsets,
            drugs: BTreeMap::new(),
        })
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    /// Dense width of one drug: the sum of modality widths.
    pub fn drug_width(&self) -> usize {
        self.modalities.iter().map(|m| m.width).sum()
    }

    /// Width of a concatenated pair vector.
    pub fn pair_width(&self) -> usize {
        2 * self.drug_width()
    }

    pub fn len(&self) -> usize {
        self.drugs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drugs.is_empty()
    }

    pub fn contains(&self, drug: &str) -> bool {
        self.drugs.contains_key(drug)
    }

    pub fn drug_ids(&self) -> impl Iterator<Item = &str> {
        self.drugs.keys().map(String::as_str)
    }

    /// Registers a drug with no set bits, if it is not already present.
    pub fn add_drug(&mut self, drug: &str) {
        let n = self.modalities.len();
        self.drugs
            .entry(drug.to_string())
            .or_insert_with(|| vec![Vec::new(); n]);
    }

    /// Sets the index list of one drug in one modality. Indices must be
    /// strictly ascending and below the modality width.
    pub fn set_indices(&mut self, drug: &str, modality: &str, indices: &[usize]) -> Result<()> {
        let m = self
            .modalities
            .iter()
            .position(|x| x.name == modality)
            .ok_or_else(|| AdepError::Config(format!("unknown modality `{modality}`")))?;
        let width = self.modalities[m].width;
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(AdepError::Config(format!(
                    "indices for drug {drug}, modality `{modality}` are not strictly ascending"
                )));
            }
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= width) {
            return Err(AdepError::Range {
                drug: drug.to_string(),
                modality: modality.to_string(),
                index: bad,
                width,
            });
        }
        self.add_drug(drug);
        let slot = &mut self.drugs.get_mut(drug).expect("just added")[m];
        *slot = indices.iter().map(|&i| i as u32).collect();
        Ok(())
    }

    pub fn indices(&self, drug: &str, modality: usize) -> Result<&[u32]> {
        let sets = self
            .drugs
            .get(drug)
            .ok_or_else(|| AdepError::UnknownDrug(drug.into()))?;
        Ok(&sets[modality])
    }

    /// Writes the drug's dense 0/1 vector into `out` (length `drug_width`).
    pub fn write_dense(&self, drug: &str, out: &mut [f64]) -> Result<()> {
        if out.len() != self.drug_width() {
            return Err(AdepError::dim("drug vector", self.drug_width(), out.len()));
        }
        let sets = self
            .drugs
            .get(drug)
            .ok_or_else(|| AdepError::UnknownDrug(drug.into()))?;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (set, &offset) in sets.iter().zip(&self.offsets) {
            for &i in set {
                out[offset + i as usize] = 1.0;
            }
        }
        Ok(())
    }

    pub fn dense(&self, drug: &str) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.drug_width()];
        self.write_dense(drug, &mut out)?;
        Ok(out)
    }

    /// Drug `a`'s modalities followed by drug `b`'s, each in declared
    /// modality order.
    pub fn build_pair_vector(&self, a: &str, b: &str) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.pair_width()];
        self.write_pair_vector(a, b, &mut out)?;
        Ok(out)
    }

    pub fn write_pair_vector(&self, a: &str, b: &str, out: &mut [f64]) -> Result<()> {
        let w = self.drug_width();
        if out.len() != 2 * w {
            return Err(AdepError::dim("pair vector", 2 * w, out.len()));
        }
        let (first, second) = out.split_at_mut(w);
        self.write_dense(a, first)?;
        self.write_dense(b, second)
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| AdepError::io(path, e))?;
        let parse_err = |line: usize, message: String| AdepError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing modality header".into()))?
            .map_err(|e| AdepError::io(path, e))?;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
        let mut table =
            DrugFeatureTable::new(header.modalities).map_err(|e| parse_err(1, e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| AdepError::io(path, e))?;
            if line.trim().is_empty() {
                return Err(parse_err(line_no, "blank line".into()));
            }
            let record: Record =
                serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
            if record.drug_id.is_empty() || record.drug_id.contains(['\t', '\n']) {
                return Err(parse_err(line_no, "invalid drug id".into()));
            }
            if !seen.insert((record.drug_id.clone(), record.modality.clone())) {
                return Err(parse_err(
                    line_no,
                    format!(
                        "duplicate record for {} / {}",
                        record.drug_id, record.modality
                    ),
                ));
            }
            table
                .set_indices(&record.drug_id, &record.modality, &record.indices)
                .map_err(|e| match e {
                    e @ AdepError::Range { .. } => e,
                    other => parse_err(line_no, other.to_string()),
                })?;
        }
        Ok(table)
    }

    /// One record per drug and modality, drugs in sorted order.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| AdepError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| AdepError::io(path, e);
        serde_json::to_writer(
            &mut w,
            &Header {
                modalities: self.modalities.clone(),
            },
        )?;
        w.write_all(b"\n").map_err(io)?;
        for (drug, sets) in &self.drugs {
            for (m, set) in self.modalities.iter().zip(sets) {
                let record = Record {
                    drug_id: drug.clone(),
                    modality: m.name.clone(),
                    indices: set.iter().map(|&i| i as usize).collect(),
                };
                serde_json::to_writer(&mut w, &record)?;
                w.write_all(b"\n").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}
