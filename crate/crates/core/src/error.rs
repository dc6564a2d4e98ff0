use thiserror::Error;

use crate::diagnostics::StepRecord;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments to an operation (dimension mismatch, out-of-range coefficient).
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration that cannot be honoured, e.g. a rule whose scaling
    /// bounds need a gradient bound the oracle does not declare.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value at iteration {iteration}: {what}")]
    Numeric { iteration: u64, what: String },

    /// A pathwise inequality that must hold did not.
    #[error("diagnostic failure at t={}: {message}", record.t)]
    Diagnostic {
        message: String,
        record: Box<StepRecord>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Json(_) => 2,
            Error::Diagnostic { .. } => 3,
            Error::Numeric { .. } | Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
