//! Labelled drug pairs, `interactions.tsv` and `events.tsv`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{AdepError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub drug_a: String,
    pub drug_b: String,
    pub event: usize,
    /// Identity of the unordered pair; shared by both orderings.
    pub origin_pair: usize,
}

impl PairSample {
    pub fn mirrored(&self) -> PairSample {
        PairSample {
            drug_a: self.drug_b.clone(),
            drug_b: self.drug_a.clone(),
            event: self.event,
            origin_pair: self.origin_pair,
        }
    }
}

/// Each pair followed by its reversed ordering.
pub fn expand_symmetric(pairs: &[PairSample]) -> Vec<PairSample> {
    pairs
        .iter()
        .flat_map(|p| [p.clone(), p.mirrored()])
        .collect()
}

fn unordered_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Checks pair invariants and that every unordered pair appears once.
pub fn validate_pairs(pairs: &[PairSample], classes: usize) -> Result<()> {
    let mut seen = HashMap::new();
    for (i, p) in pairs.iter().enumerate() {
        if p.drug_a == p.drug_b {
            return Err(AdepError::Config(format!(
                "pair {i} pairs drug {} with itself",
                p.drug_a
            )));
        }
        if p.event >= classes {
            return Err(AdepError::Label {
                label: p.event,
                classes,
            });
        }
        if let Some(j) = seen.insert(unordered_key(&p.drug_a, &p.drug_b), i) {
            return Err(AdepError::Config(format!(
                "pair {i} ({}, {}) repeats pair {j}",
                p.drug_a, p.drug_b
            )));
        }
    }
    Ok(())
}

/// Reads `drug_a<TAB>drug_b<TAB>event_id` lines. An optional first line
/// `drug_a<TAB>drug_b<TAB>event_id` is treated as a header. Origin ids are
/// assigned in file order.
pub fn load_interactions(path: &Path) -> Result<Vec<PairSample>> {
    let file = File::open(path).map_err(|e| AdepError::io(path, e))?;
    let parse_err = |line: usize, message: String| AdepError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut pairs = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| AdepError::io(path, e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        if line_no == 1 && fields == ["drug_a", "drug_b", "event_id"] {
            continue;
        }
        let (a, b) = (fields[0], fields[1]);
        if a.is_empty() || b.is_empty() {
            return Err(parse_err(line_no, "empty drug id".into()));
        }
        if a == b {
            return Err(parse_err(line_no, format!("drug {a} paired with itself")));
        }
        let event = parse_index(fields[2])
            .ok_or_else(|| parse_err(line_no, format!("bad event id `{}`", fields[2])))?;
        if let Some(prev) = seen.insert(unordered_key(a, b), line_no) {
            return Err(parse_err(
                line_no,
                format!("pair ({a}, {b}) already listed on line {prev}"),
            ));
        }
        pairs.push(PairSample {
            drug_a: a.to_string(),
            drug_b: b.to_string(),
            event,
            origin_pair: pairs.len(),
        });
    }
    Ok(pairs)
}

/// Plain decimal only: no sign, no leading zeros.
fn parse_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0'))
    {
        return None;
    }
    s.parse().ok()
}

pub fn write_interactions(path: &Path, pairs: &[PairSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| AdepError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| AdepError::io(path, e);
    writeln!(w, "drug_a\tdrug_b\tevent_id").map_err(io)?;
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.drug_a, p.drug_b, p.event).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads `event_id<TAB>description`; ids must run 0..n in order.
pub fn load_events(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| AdepError::io(path, e))?;
    let mut names = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| AdepError::io(path, e))?;
        let parse_err = |message: String| AdepError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let (id, name) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected event_id<TAB>description".into()))?;
        if line_no == 1 && id == "event_id" {
            continue;
        }
        match parse_index(id) {
            Some(id) if id == names.len() => names.push(name.to_string()),
            _ => {
                return Err(parse_err(format!(
                    "expected event id {}, found `{id}`",
                    names.len()
                )))
            }
        }
    }
    Ok(names)
}

pub fn write_events(path: &Path, names: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| AdepError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| AdepError::io(path, e);
    writeln!(w, "event_id\tdescription").map_err(io)?;
    for (i, name) in names.iter().enumerate() {
        writeln!(w, "{i}\t{name}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-class counts over `classes` labels.
pub fn class_counts(pairs: &[PairSample], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for p in pairs {
        counts[p.event] += 1;
    }
    counts
}
