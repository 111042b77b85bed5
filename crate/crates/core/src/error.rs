use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent. The message
    /// names the offending key.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Not enough data to run an analysis (e.g. too few estimable negative
    /// controls). Callers are expected to record the skip and move on.
    #[error("insufficient evidence: {0}")]
    InsufficientEvidence(String),

    /// A numeric procedure failed (underflow, non-convergence of a
    /// deterministic solver, degenerate input).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
