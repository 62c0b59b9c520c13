use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// The byte stream is not in the expected layout (bad magic, truncated payload, ...).
    #[error("format error: {0}")]
    Format(String),

    /// A value violates an invariant of its type (non-finite float, duplicate id, ...).
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e}); increase lambda")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("unsupported model version {0}")]
    UnsupportedVersion(u64),

    #[error("{0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(format!($($arg)*)))
    };
}
pub(crate) use bail;
