//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its documented domain.
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    /// Linear algebra broke down in a way jitter escalation could not fix.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Two arrays that must agree in length do not.
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    /// The operation is not defined for this input variant.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A fit could not produce a result; carries optimizer/sampler diagnostics.
    #[error("fit failed: {0}")]
    FitFailed(String),

    /// Malformed input file (CSV, JSON, or key-value config).
    #[error("parse error in {path}: {why}")]
    Parse { path: String, why: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, why: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            why: why.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
