use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the regression library.
#[derive(Debug, Error)]
pub enum FlrError {
    #[error("curves live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension {requested} out of range 1..={available}")]
    Dimension { requested: usize, available: usize },

    /// `first_zero` is the 1-based index of the first vanishing eigenvalue.
    #[error("dimension {requested} exceeds the numerical rank: eigenvalue {first_zero} is zero")]
    Rank { requested: usize, first_zero: usize },

    #[error("sample size n = {0} is below the minimum of 6")]
    SampleTooSmall(usize),

    #[error("degenerate sample: largest eigenvalue {lambda1:e} is below the threshold {threshold:e}")]
    Degenerate { lambda1: f64, threshold: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    DataFile { path: PathBuf, message: String },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Io,
}

impl FlrError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            FlrError::Config(_) | FlrError::Json(_) => ErrorKind::Config,
            FlrError::GridMismatch
            | FlrError::InvalidGrid(_)
            | FlrError::InvalidCurve(_)
            | FlrError::InsufficientData(_)
            | FlrError::SampleTooSmall(_)
            | FlrError::Degenerate { .. }
            | FlrError::Parse { .. }
            | FlrError::DataFile { .. } => ErrorKind::Data,
            FlrError::Precondition(_)
            | FlrError::Dimension { .. }
            | FlrError::Rank { .. }
            | FlrError::Numeric(_) => ErrorKind::Numeric,
            FlrError::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlrError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, FlrError>;
