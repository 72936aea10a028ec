use thiserror::Error;

/// Errors raised by the forward model, observation generators and inversion routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spatial grid: {0}")]
    InvalidGrid(String),

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("invalid parameter field `{name}`: {reason}")]
    InvalidField { name: &'static str, reason: String },

    #[error("fields are defined on different grids")]
    GridMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("exponent {exponent:.6e} out of range at t = {t}, x = {x}")]
    ExponentOverflow { t: f64, x: f64, exponent: f64 },

    #[error(
        "fixed-point iteration did not converge at step {step} after {iterations} iterations \
         (last update {update:.3e}, contraction constant {contraction:.3e})"
    )]
    FixedPointNotConverged {
        step: usize,
        iterations: usize,
        update: f64,
        contraction: f64,
    },

    #[error("noise draw degenerated to the zero vector")]
    DegenerateNoise,

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("initial density is not positive at x = {x} (n0 = {value:e})")]
    NonPositiveDensity { x: f64, value: f64 },

    #[error("cumulative mass R(t) = {value:e} too small at t = {t}")]
    VanishingMass { t: f64, value: f64 },

    #[error("two-time system is singular (det = {det:e})")]
    SingularSystem { det: f64 },

    #[error("time {t} is not a node of the time grid")]
    NotATimeNode { t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
