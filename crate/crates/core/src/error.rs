//! Error type shared by every pipeline stage.

use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::SetLabel;

/// Errors produced by the library.
///
/// Variants fall into three families (configuration, data, numeric
/// degeneracy) which the CLI maps onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: file contains no samples")]
    EmptyFile(PathBuf),

    #[error("set {label}: directory {path} does not exist")]
    MissingSetDirectory { label: SetLabel, path: PathBuf },

    #[error("set {label}: no channel files in {path}")]
    EmptySet { label: SetLabel, path: PathBuf },

    #[error("set {0} is required by the case but not configured")]
    UnconfiguredSet(SetLabel),

    #[error("{what}: need at least {need} values, got {got}")]
    TooShort {
        what: &'static str,
        need: usize,
        got: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("input is constant; correlation undefined")]
    ConstantInput,

    #[error("need two classes, found {0}")]
    ClassCount(usize),

    #[error("numeric degeneracy: {0}")]
    Degenerate(String),

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code associated with this error: 2 for configuration
    /// problems, 3 for data problems, 4 for numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnconfiguredSet(_) | Error::UnknownFeature(_) => 2,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyFile(_)
            | Error::MissingSetDirectory { .. }
            | Error::EmptySet { .. }
            | Error::TooShort { .. }
            | Error::LengthMismatch { .. }
            | Error::ClassCount(_)
            | Error::Format { .. } => 3,
            Error::ConstantInput | Error::Degenerate(_) => 4,
        }
    }
}
