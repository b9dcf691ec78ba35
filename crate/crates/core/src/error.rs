use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("waypoint coincides with the current position of UAV {0}")]
    DegenerateWaypoint(u32),

    #[error("position ({x}, {y}) is not valid here: {reason}")]
    InvalidPosition { x: f64, y: f64, reason: &'static str },

    #[error("clock went backwards: {now} after {last}")]
    NonMonotoneClock { now: u64, last: u64 },

    #[error("covariance is not symmetric positive-definite after {0}")]
    NotPositiveDefinite(&'static str),

    #[error("matrix is singular in {0}")]
    Singular(&'static str),

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("unknown routine `{0}`")]
    UnknownRoutine(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("map parse error on line {line}: {reason}")]
    MapParse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
