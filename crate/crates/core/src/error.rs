//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameter values, unknown stage letters, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data. Carries the file and 1-based line
    /// where the problem was found whenever that is known.
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: u64,
        msg: String,
    },

    /// Input data that is well-formed but semantically invalid
    /// (dangling references, empty graphs, shape mismatches, ...).
    #[error("data error: {0}")]
    Data(String),

    /// An internal invariant was violated; indicates a bug, not bad input.
    #[error("invariant violation: {0}")]
    Invariant(String),

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

    /// Process exit code for CLI front-ends: 2 config, 3 data, 4 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 3,
            Error::Invariant(_) => 4,
        }
    }
}
