//! Crate-wide error type.

use std::fmt;

/// Errors produced while validating inputs or running the numerical pipeline.
#[derive(Debug)]
pub enum Error {
    /// Invalid data: malformed game, profile outside its domain, bad config.
    Invalid(String),
    /// A numerical procedure failed to reach its accuracy target.
    Numerical(String),
    /// File system error while reading or writing artifacts.
    Io(std::io::Error),
    /// JSON (de)serialization error.
    Json(serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
            Error::Json(err) => write!(f, "json error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            Error::Json(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Json(err)
    }
}
