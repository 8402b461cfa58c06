use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VgsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VgsError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("input too short: {len} frames for a kernel of width {kernel}")]
    InputTooShort { len: usize, kernel: usize },

    #[error("cannot normalize a vector with norm {norm:e}")]
    DegenerateVector { norm: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}: line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("caption {caption_id}: {reason}")]
    Caption { caption_id: String, reason: String },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("unknown tag {tag:?} for scheme {scheme:?}")]
    UnknownTag { tag: String, scheme: String },

    #[error("no assigned peaks to aggregate")]
    NoAssignedPeaks,

    #[error("retrieval: {0}")]
    Retrieval(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl VgsError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        VgsError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VgsError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        VgsError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs (configs, files, tags) as opposed
    /// to failures during numerical work.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            VgsError::NonFinite(_) | VgsError::DegenerateVector { .. } | VgsError::Io { .. }
        )
    }
}
