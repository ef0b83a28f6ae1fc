use thiserror::Error;

/// Errors raised by the library. Variants map onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("amplitude cap exceeded: need {needed}, cap {cap}")]
    CapExceeded { needed: usize, cap: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not a valid density operator: {0}")]
    InvalidDensity(String),
    #[error("no root in bracket: {0}")]
    NoRoot(String),
    #[error("zero-probability outcome")]
    NullOutcome,
    #[error("flutters not orthogonal: |<x|y>| = {0:e}")]
    NotOrthogonal(f64),
    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
