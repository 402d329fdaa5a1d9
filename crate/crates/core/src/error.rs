//! Error types shared across the pipeline.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{potential} is singular at the origin of the (x1,x2) plane")]
    SingularPoint { potential: &'static str },

    /// A trajectory left the stable region; the step index names where.
    #[error("integration unstable at step {step}: coordinate magnitude exceeded {limit:e}")]
    Instability { step: usize, limit: f64 },

    #[error("burst unstable at point {point}, replicate {replicate}, step {step}")]
    BurstInstability {
        point: usize,
        replicate: usize,
        step: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("point set too large: {count} points exceeds the {max} limit")]
    TooLarge { count: usize, max: usize },

    #[error("kernel graph is disconnected ({components} components); increase sigma or the cutoff")]
    DisconnectedCloud { components: usize },

    #[error("no transitions recorded: every lagged pair had an out-of-domain endpoint")]
    EmptyCounts,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("randomized construction failed after {attempts} attempts: {what}")]
    ImprobableFailure { what: String, attempts: usize },

    #[error("state error: {0}")]
    State(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error in {file}: {detail}")]
    Parse { file: String, detail: String },
}
