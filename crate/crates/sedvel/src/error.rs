//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error.
///
/// The variants map to the failure classes surfaced by the CLI: domain errors
/// are precondition violations on operation inputs, data errors are malformed
/// or inconsistent files, numerical errors are factorization/convergence
/// failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for building a domain error.
pub fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// Shorthand for building a data error.
pub fn data(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}

/// Shorthand for building a numerical error.
pub fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}
