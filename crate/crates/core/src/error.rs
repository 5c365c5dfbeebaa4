use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid label values at rows {rows:?}")]
    InvalidLabels { rows: Vec<usize> },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("memory budget exceeded: {required} bytes required, cap is {cap} bytes")]
    MemoryBudget { required: u64, cap: u64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Schema(_) => "schema",
            Error::InvalidLabels { .. } => "invalid_labels",
            Error::Data(_) => "data",
            Error::MemoryBudget { .. } => "memory_budget",
            Error::Shape(_) => "shape",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
        }
    }
}
