use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variants are grouped so that a front end can map them onto stable
/// exit codes: configuration problems, data problems and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty matrix: {0}")]
    EmptyMatrix(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("model/data incompatible: {0}")]
    Incompatible(String),

    #[error("index ({row}, {col}) out of range for {rows}x{cols} matrix")]
    OutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Broad classification used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => ErrorClass::Config,
            Error::Parse { .. }
            | Error::EmptyMatrix(_)
            | Error::InvalidShape(_)
            | Error::InfeasibleSplit(_)
            | Error::Incompatible(_)
            | Error::OutOfRange { .. }
            | Error::EmptyInput(_) => ErrorClass::Data,
            Error::Decomposition(_) => ErrorClass::Numerical,
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
