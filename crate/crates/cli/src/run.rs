//! Run directory layout: config.json, manifest.json, history.jsonl,
//! checkpoint.{json,bin}, metrics.json, table.tsv.
//!
//! Everything except manifest.json is a pure function of the command line
//! and seed. Timings and timestamps live only in the manifest.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use adep::metrics::MetricsReport;
use adep::{AdepError, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const TABLE_FILE: &str = "table.tsv";
pub const CHECKPOINT_STEM: &str = "checkpoint";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReports {
    pub fold: usize,
    pub rows: Vec<MethodReport>,
}

/// Contents of metrics.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub command: String,
    /// One row per method; fold means for multi-fold runs.
    pub rows: Vec<MethodReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<FoldReports>,
}

impl MetricsFile {
    pub fn table_rows(&self) -> Vec<(String, MetricsReport)> {
        self.rows
            .iter()
            .map(|r| (r.method.clone(), r.report.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataInfo {
    pub dir: PathBuf,
    pub manifest_checked: bool,
    pub classes: usize,
    pub pairs: usize,
    pub pair_width: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub adep: &'static str,
    pub checkpoint_format: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub config_hash: String,
    pub data: Option<DataInfo>,
    pub versions: Versions,
    pub started_unix: u64,
    pub wall_seconds: f64,
    /// Per training run, seconds per epoch.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub epoch_seconds: Vec<(String, Vec<f64>)>,
}

pub struct RunDir {
    pub path: PathBuf,
    started: Instant,
    started_unix: u64,
}

impl RunDir {
    pub fn create(path: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&path).map_err(|e| AdepError::io(&path, e))?;
        Ok(RunDir {
            path,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.file(name);
        std::fs::write(&p, text).map_err(|e| AdepError::io(&p, e))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write_text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        &self,
        command: &str,
        seed: u64,
        threads: usize,
        config_hash: String,
        data: Option<DataInfo>,
        epoch_seconds: Vec<(String, Vec<f64>)>,
    ) -> Result<()> {
        let manifest = RunManifest {
            command: command.to_string(),
            argv: std::env::args().skip(1).collect(),
            seed,
            threads,
            config_hash,
            data,
            versions: Versions {
                adep: env!("CARGO_PKG_VERSION"),
                checkpoint_format: adep::checkpoint::FORMAT,
            },
            started_unix: self.started_unix,
            wall_seconds: self.started.elapsed().as_secs_f64(),
            epoch_seconds,
        };
        self.write_json(MANIFEST_FILE, &manifest)
    }
}

pub fn read_metrics(dir: &Path) -> Result<MetricsFile> {
    let p = dir.join(METRICS_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| AdepError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| AdepError::Parse {
        path: p,
        line: e.line(),
        message: e.to_string(),
    })
}
