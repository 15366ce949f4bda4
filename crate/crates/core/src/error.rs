use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("interval start {start} exceeds end {end}")]
    ReversedInterval { start: f64, end: f64 },

    #[error("cumulative-hazard target must be nonnegative, got {0}")]
    NegativeTarget(f64),

    #[error("individual {individual} is already infected at time {time}")]
    AlreadyInfected { individual: usize, time: f64 },

    #[error("individual {individual} has more than one infection event")]
    DuplicateEvent { individual: usize },

    #[error("infection times must be strictly increasing and positive (event {index} at {time})")]
    UnorderedHistory { index: usize, time: f64 },

    #[error("invalid configuration for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("dimension mismatch: {context} expects {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("enumeration guard exceeded: {states} states > {limit}")]
    GuardExceeded { states: u128, limit: u128 },

    #[error("conditioning event has zero probability mass: {0}")]
    ZeroMass(String),

    #[error("GEE fit failed: {0}")]
    GeeFailure(String),

    #[error("dataset error at line {line}: {reason}")]
    Dataset { line: usize, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
