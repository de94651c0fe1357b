use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("intensity {lambda} over window volume {volume} exceeds the point-count guard")]
    IntensityOverflow { lambda: f64, volume: f64 },

    #[error("intensity must be finite and positive, got {0}")]
    InvalidIntensity(f64),

    #[error("stream role {0} out of range (must be < 16)")]
    RoleOutOfRange(u64),

    #[error("empty point sample")]
    EmptySample,

    #[error("all sites are collinear")]
    AllCollinear,

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("nonpositive variance at grid index {0}")]
    NonPositiveVariance(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
