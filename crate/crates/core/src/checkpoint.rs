//! Checkpoints: a JSON manifest beside a little-endian tensor blob.
//!
//! `<stem>.json` records the model kind, architecture, seed, config hash
//! and one entry per tensor (name, shape, dtype, byte offset and length);
//! `<stem>.bin` holds the raw tensor bytes back to back. Neither file
//! contains timestamps, so identical runs write identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::sha256_hex;
use crate::model::{AdepArch, AdepModel};
use crate::{AdepError, Result};

pub const FORMAT: &str = "adep-checkpoint/1";
pub const MODEL_KIND: &str = "adep";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    I64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    I64(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f64(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Tensor {
            name: name.into(),
            shape,
            data: TensorData::F64(data),
        }
    }

    pub fn i64(name: impl Into<String>, shape: Vec<usize>, data: Vec<i64>) -> Self {
        Tensor {
            name: name.into(),
            shape,
            data: TensorData::I64(data),
        }
    }

    fn len(&self) -> usize {
        match &self.data {
            TensorData::F64(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }

    fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F64(_) => Dtype::F64,
            TensorData::I64(_) => Dtype::I64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub kind: String,
    pub arch: serde_json::Value,
    pub seed: u64,
    pub config_hash: String,
    pub blob: String,
    pub blob_sha256: String,
    pub tensors: Vec<TensorEntry>,
}

/// Loaded tensors keyed by name.
#[derive(Debug, Default)]
pub struct TensorSet(BTreeMap<String, Tensor>);

impl TensorSet {
    pub fn take(&mut self, name: &str) -> Result<Tensor> {
        self.0
            .remove(name)
            .ok_or_else(|| AdepError::Checkpoint(format!("tensor `{name}` missing")))
    }

    pub fn take_f64(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self.take(name)?;
        expect_shape(&t, shape)?;
        match t.data {
            TensorData::F64(v) => Ok(v),
            TensorData::I64(_) => Err(AdepError::Checkpoint(format!("tensor `{name}` is not f64"))),
        }
    }

    pub fn take_i64(&mut self, name: &str, shape: &[usize]) -> Result<Vec<i64>> {
        let t = self.take(name)?;
        expect_shape(&t, shape)?;
        match t.data {
            TensorData::I64(v) => Ok(v),
            TensorData::F64(_) => Err(AdepError::Checkpoint(format!("tensor `{name}` is not i64"))),
        }
    }

    /// Shape of a tensor without removing it.
    pub fn shape(&self, name: &str) -> Result<&[usize]> {
        self.0
            .get(name)
            .map(|t| t.shape.as_slice())
            .ok_or_else(|| AdepError::Checkpoint(format!("tensor `{name}` missing")))
    }

    /// Errors if any tensor was left unconsumed.
    pub fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(name) => Err(AdepError::Checkpoint(format!("unexpected tensor `{name}`"))),
            None => Ok(()),
        }
    }
}

fn expect_shape(t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.shape != shape {
        return Err(AdepError::dim(
            format!("checkpoint tensor `{}`", t.name),
            format!("{shape:?}"),
            format!("{:?}", t.shape),
        ));
    }
    Ok(())
}

/// SHA-256 of the compact JSON serialization.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

pub struct CheckpointMeta<'a> {
    pub kind: &'a str,
    pub arch: serde_json::Value,
    pub seed: u64,
    pub config_hash: &'a str,
}

pub fn write_checkpoint(
    dir: &Path,
    stem: &str,
    meta: CheckpointMeta<'_>,
    tensors: &[Tensor],
) -> Result<CheckpointManifest> {
    std::fs::create_dir_all(dir).map_err(|e| AdepError::io(dir, e))?;
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.len() {
            return Err(AdepError::dim(
                format!("tensor `{}`", t.name),
                t.shape.iter().product::<usize>(),
                t.len(),
            ));
        }
        let offset = blob.len() as u64;
        match &t.data {
            TensorData::F64(v) => v
                .iter()
                .for_each(|x| blob.extend_from_slice(&x.to_le_bytes())),
            TensorData::I64(v) => v
                .iter()
                .for_each(|x| blob.extend_from_slice(&x.to_le_bytes())),
        }
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            dtype: t.dtype(),
            offset,
            length: blob.len() as u64 - offset,
        });
    }
    let blob_name = format!("{stem}.bin");
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        kind: meta.kind.into(),
        arch: meta.arch,
        seed: meta.seed,
        config_hash: meta.config_hash.into(),
        blob: blob_name.clone(),
        blob_sha256: sha256_hex(&blob),
        tensors: entries,
    };
    let blob_path = dir.join(&blob_name);
    std::fs::write(&blob_path, &blob).map_err(|e| AdepError::io(&blob_path, e))?;
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&json_path, text).map_err(|e| AdepError::io(&json_path, e))?;
    Ok(manifest)
}

pub fn read_checkpoint(dir: &Path, stem: &str) -> Result<(CheckpointManifest, TensorSet)> {
    let json_path = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&json_path).map_err(|e| AdepError::io(&json_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| AdepError::Checkpoint(format!("{}: {e}", json_path.display())))?;
    if manifest.format != FORMAT {
        return Err(AdepError::Checkpoint(format!(
            "unsupported format `{}`",
            manifest.format
        )));
    }
    let blob_path = dir.join(&manifest.blob);
    let blob = std::fs::read(&blob_path).map_err(|e| AdepError::io(&blob_path, e))?;
    if sha256_hex(&blob) != manifest.blob_sha256 {
        return Err(AdepError::Checkpoint(format!(
            "{} does not match its digest",
            blob_path.display()
        )));
    }
    let mut set = BTreeMap::new();
    for e in &manifest.tensors {
        let count: usize = e.shape.iter().product();
        let (start, len) = (e.offset as usize, e.length as usize);
        if len != count * 8 || start.checked_add(len).is_none_or(|end| end > blob.len()) {
            return Err(AdepError::Checkpoint(format!(
                "tensor `{}` has an inconsistent extent",
                e.name
            )));
        }
        let words = blob[start..start + len]
            .chunks_exact(8)
            .map(|c| c.try_into().expect("8-byte chunk"));
        let data = match e.dtype {
            Dtype::F64 => TensorData::F64(words.map(f64::from_le_bytes).collect()),
            Dtype::I64 => TensorData::I64(words.map(i64::from_le_bytes).collect()),
        };
        let t = Tensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data,
        };
        if set.insert(e.name.clone(), t).is_some() {
            return Err(AdepError::Checkpoint(format!(
                "tensor `{}` listed twice",
                e.name
            )));
        }
    }
    Ok((manifest, TensorSet(set)))
}

pub fn model_tensors(model: &mut AdepModel) -> Vec<Tensor> {
    model
        .state()
        .into_iter()
        .map(|(name, shape, data)| Tensor::f64(name, shape, data.to_vec()))
        .collect()
}

pub fn save_model(
    dir: &Path,
    stem: &str,
    model: &mut AdepModel,
    seed: u64,
    config_hash: &str,
) -> Result<CheckpointManifest> {
    let arch = serde_json::to_value(model.arch())?;
    let tensors = model_tensors(model);
    write_checkpoint(
        dir,
        stem,
        CheckpointMeta {
            kind: MODEL_KIND,
            arch,
            seed,
            config_hash,
        },
        &tensors,
    )
}

/// Rebuilds the model from its recorded architecture and overwrites every
/// tensor; names and shapes must match exactly.
pub fn load_model(dir: &Path, stem: &str) -> Result<(AdepModel, CheckpointManifest)> {
    let (manifest, mut tensors) = read_checkpoint(dir, stem)?;
    if manifest.kind != MODEL_KIND {
        return Err(AdepError::Checkpoint(format!(
            "expected a model checkpoint, found `{}`",
            manifest.kind
        )));
    }
    let arch: AdepArch = serde_json::from_value(manifest.arch.clone())
        .map_err(|e| AdepError::Checkpoint(format!("bad architecture record: {e}")))?;
    let mut model = AdepModel::new(arch, manifest.seed)?;
    for (name, shape, data) in model.state() {
        let values = tensors.take_f64(&name, &shape)?;
        data.copy_from_slice(&values);
    }
    tensors.finish()?;
    Ok((model, manifest))
}
