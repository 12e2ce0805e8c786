use std::path::{Path, PathBuf};

use thiserror::Error;

/// Unified error type for the whole lab.
///
/// The variants are grouped by who is at fault: `Config`/`Input`/`Parse`
/// mean the caller handed us something unusable (a CLI maps these to exit
/// code 2), everything else is a runtime failure (exit code 1).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// Malformed text input. `line` is 1-based and counts the header.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("training aborted at epoch {epoch}, batch {batch}: {msg}")]
    Training {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    /// A gradient buffer contains NaN or infinity; nothing was applied.
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("mixture fit failed: {0}")]
    Fit(String),

    #[error("AUC undefined: need at least one positive and one negative sample")]
    UndefinedAuc,

    #[error("report error: {0}")]
    Report(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// True when the error is the caller's fault (bad config, bad file,
    /// bad flag value) rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Input(_) | Error::Parse { .. } | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
