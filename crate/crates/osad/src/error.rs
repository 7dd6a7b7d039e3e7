//! Crate-wide error type and exit-code classes.

use thiserror::Error;

/// Alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad inputs: dimension mismatch, non-finite values, empty data.
    Validation,
    /// The requested design/computation has no solution.
    Infeasible,
    /// Filesystem or parsing trouble.
    Io,
}

impl ErrorClass {
    /// Process exit code for this class (0 is success).
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Validation => 2,
            ErrorClass::Infeasible => 3,
            ErrorClass::Io => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("decoupling verification failed: {0}")]
    DecouplingFailed(String),

    #[error("calibration signal is constant (sigma = 0); CUSUM thresholds undefined")]
    DegenerateCalibration,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("numerical problem: {0}")]
    Numerical(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("file content hash mismatch in {0} (corrupted or hand-edited)")]
    HashMismatch(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::NonFinite(_)
            | Error::InvalidArgument(_)
            | Error::InsufficientData(_)
            | Error::DegenerateCalibration
            | Error::UndefinedMetric(_)
            | Error::Numerical(_) => ErrorClass::Validation,
            Error::Infeasible(_) | Error::DecouplingFailed(_) => ErrorClass::Infeasible,
            Error::Parse { .. }
            | Error::HashMismatch(_)
            | Error::MissingArtifact(_)
            | Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
