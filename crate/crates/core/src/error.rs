use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} = {value} exceeds the configured cap {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An internal consistency check between two independent computation
    /// paths disagreed. Always a bug in this crate.
    #[error("internal mismatch in {context}: {detail}")]
    Mismatch { context: String, detail: String },

    /// A step guaranteed by the underlying argument did not hold on a
    /// concrete instance. The dump carries enough state to reproduce it.
    #[error("falsification in {context}: {detail}")]
    Falsification {
        context: String,
        detail: String,
        dump: serde_json::Value,
    },

    #[error("certificate check failed at step {step}: {reason}")]
    Certificate { step: usize, reason: String },

    #[error("trace schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn mismatch(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Mismatch {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn falsification(context: impl Into<String>, detail: impl Into<String>, dump: serde_json::Value) -> Self {
        Error::Falsification {
            context: context.into(),
            detail: detail.into(),
            dump,
        }
    }

    pub fn is_falsification(&self) -> bool {
        matches!(self, Error::Falsification { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
