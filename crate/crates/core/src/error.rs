//! Error types shared across the crate.

use std::fmt;

use thiserror::Error;

/// Which level of the nested particle system an error refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    /// The island (parameter) level.
    Island,
    /// The within-island (state particle) level.
    Inner,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Island => write!(f, "island"),
            Level::Inner => write!(f, "inner"),
        }
    }
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Every selection weight at the given level vanished: the particle system
    /// can no longer be resampled and the run must abort.
    #[error("particle extinction at the {level} level, step {step}")]
    Extinction { level: Level, step: usize },

    /// All weights handed to a selection routine were zero (context-free
    /// variant used by the low-level weight ops; drivers convert it into
    /// [`Error::Extinction`] with level and step attached).
    #[error("all selection weights are zero")]
    WeightsAllZero,

    /// A potential evaluated to NaN, infinity, or a negative number.
    #[error("invalid potential {value:e} for particle {index} at step {step}")]
    NonFinitePotential { step: usize, index: usize, value: f64 },

    /// A probability vector failed validation.
    #[error("invalid probability vector: {reason}")]
    InvalidProbabilities { reason: String },

    /// The innovation covariance of a Kalman update is numerically singular.
    #[error("innovation covariance is numerically singular (condition number {cond:.3e})")]
    SingularInnovation { cond: f64 },

    /// Mismatched vector/matrix dimensions.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// A computed quantity that must be finite was not.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// The grid filter detected probability mass piling up on its boundary;
    /// the grid does not cover the posterior support.
    #[error("grid boundary carries mass {mass:.3e} (limit {limit:.3e}) at step {step}; enlarge the grid")]
    GridTooSmall { mass: f64, limit: f64, step: usize },

    /// A caller-supplied argument was rejected.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
