use thiserror::Error;

/// Errors produced by the risk, model, solver and rollout layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. `alpha <= 0`).
    #[error("domain error: {0}")]
    Domain(String),
    /// An input object violates one of its structural invariants.
    #[error("validation error: {0}")]
    Validation(String),
    /// A numerical routine failed (non-convergence, malformed curve).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A file could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    /// The request is well-formed but no solver exists for it here.
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        if err.is_io() {
            return Error::Io(err.into());
        }
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
