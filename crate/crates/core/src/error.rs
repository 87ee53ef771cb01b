use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data could not be read or parsed.
    #[error("ingestion error in {path}: {message}")]
    Ingestion { path: PathBuf, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A dense reference computation was requested above its size cap.
    #[error("dense oracle refused: n = {n} exceeds cap {cap}")]
    OracleScale { n: usize, cap: usize },

    #[error("degenerate sample: column {column} has zero norm")]
    DegenerateSample { column: usize },

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("non-finite loss at outer iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("undefined denominator: {0}")]
    UndefinedDenominator(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn ingestion(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Ingestion {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the error class: 1 configuration, 2 ingestion
    /// and i/o, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) | Error::Domain(_) | Error::OracleScale { .. } => 1,
            Error::Ingestion { .. } | Error::Io { .. } | Error::DegenerateSample { .. } => 2,
            Error::DegenerateAlignment(_)
            | Error::Divergence { .. }
            | Error::UndefinedDenominator(_)
            | Error::Numerical(_) => 3,
        }
    }
}
