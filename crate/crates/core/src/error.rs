use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("gate is not unitary (deviation {deviation:e})")]
    NonUnitary { deviation: f64 },

    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("duplicate target qubit {0}")]
    DuplicateTarget(usize),

    #[error("numerical integrity: {0}")]
    NumericalIntegrity(String),

    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("non-finite value in {factor}")]
    Overflow { factor: &'static str },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("unknown loss kind `{0}`")]
    UnknownLoss(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("insufficient data: requested {requested}, available {available}")]
    InsufficientData { requested: usize, available: usize },

    #[error("malformed comb layout: {0}")]
    MalformedComb(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Capacity,
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } | Error::UnknownLoss(_) => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Format { .. }
            | Error::Io { .. }
            | Error::EmptyDataset
            | Error::InsufficientData { .. } => ErrorClass::Data,
            Error::Capacity(_) => ErrorClass::Capacity,
            _ => ErrorClass::Other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
