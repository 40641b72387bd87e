use std::path::PathBuf;

use bliss_core::BlissError;
use thiserror::Error;

/// Malformed input files. Rows and columns are 1-based and count the
/// header row.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("{file}: empty file")]
    Empty { file: String },

    #[error("{file}: row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        file: String,
        row: usize,
        column: usize,
        value: String,
    },

    #[error("{file}: grid header is not strictly increasing at column {column} ({previous} then {value})")]
    NonIncreasingGrid {
        file: String,
        column: usize,
        previous: f64,
        value: f64,
    },

    #[error("{file}: row {row} has {found} values, expected {expected}")]
    RowLength {
        file: String,
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("dimension mismatch: {curves} curve rows but {outcomes} outcomes")]
    DimensionMismatch { curves: usize, outcomes: usize },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration errors, 3 for bad data, 4 for numerical
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Ingest(_) | CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message with `context`, keeping the category.
    pub fn context(self, context: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{context}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{context}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{context}: {m}")),
            other => other,
        }
    }
}

impl From<BlissError> for CliError {
    fn from(e: BlissError) -> Self {
        if e.is_numerical() {
            return CliError::Numerical(e.to_string());
        }
        match e {
            BlissError::InvalidParameter(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
