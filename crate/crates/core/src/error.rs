use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AdepError>;

#[derive(Debug, Error)]
pub enum AdepError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("batch normalization needs at least 2 rows in train mode, got {0}")]
    DegenerateBatch(usize),

    #[error("backward called on layer `{0}` before a forward pass")]
    MissingCache(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("non-finite value in {location}")]
    Numerical { location: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("index {index} out of range for modality `{modality}` of width {width} (drug {drug})")]
    Range {
        drug: String,
        modality: String,
        index: usize,
        width: usize,
    },

    #[error("unknown drug id `{0}`")]
    UnknownDrug(String),

    #[error("empirical fake-latent sampling needs a real latent batch with at least 2 rows")]
    MissingStatistics,

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AdepError {
    pub fn dim(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        AdepError::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AdepError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            AdepError::Divergence { .. } | AdepError::Numerical { .. } | AdepError::Io { .. }
        )
    }
}
