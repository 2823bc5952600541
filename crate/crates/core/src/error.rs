use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("{path}: line {line}: record `{id}` has dimension {found}, expected {expected}")]
    RecordDimension {
        path: PathBuf,
        line: usize,
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("cannot normalize a zero-length vector")]
    DegenerateVector,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("embedding service: {0}")]
    Service(String),

    #[error("embedding service protocol: {0}")]
    Protocol(String),

    #[error("missing embedding for `{0}`")]
    Lookup(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("no qualifying pairs for dimension `{0}`")]
    EmptyPairSet(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no overlap between predictions and ground truth for `{0}`")]
    EmptyJoin(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(expected: usize, found: usize) -> Self {
        Error::Dimension { expected, found }
    }
}
