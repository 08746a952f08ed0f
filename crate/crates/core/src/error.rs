use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates the physical or mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented size bound was exceeded.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("invalid pulse sequence: {0}")]
    SequenceValidation(String),

    #[error("no out-of-phase signal in coherence curve")]
    NoOutOfPhaseSignal,

    #[error("fit quality: {0}")]
    FitQuality(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("missing column `{column}` (available: {available})")]
    MissingColumn { column: String, available: String },

    #[error("unknown plot kind `{kind}` (available: {available})")]
    UnknownPlotKind { kind: String, available: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
