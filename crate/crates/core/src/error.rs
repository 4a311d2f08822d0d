use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("outcome {outcome} has zero probability ({probability:e}); collapse undefined")]
    ZeroProbabilityOutcome { outcome: u8, probability: f64 },

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("step size too large: {reason} (try dt <= {suggested:e})")]
    StepSize { reason: String, suggested: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("parse error at line {line}, key `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for this error class. Zero is success, 1 is
    /// reserved for failed validation checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::ContractViolation(_) => 3,
            Error::ZeroProbabilityOutcome { .. } => 4,
            Error::OutOfRegime(_) => 5,
            Error::NumericalUnderflow(_) => 6,
            Error::Configuration(_) => 7,
            Error::StepSize { .. } => 8,
            Error::InsufficientData(_) => 9,
            Error::NotFound(_) => 10,
            Error::DataIntegrity(_) => 11,
            Error::Parse { .. } => 12,
            Error::Io { .. } => 13,
        }
    }
}
