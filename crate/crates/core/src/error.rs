use thiserror::Error;

use crate::model::Frame;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("drift matrix is unstable (largest eigenvalue real part {max_real:.6e} >= 0)")]
    Unstable { max_real: f64 },

    #[error("Lyapunov system is numerically singular (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("Lyapunov residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("time step {dt:.3e} s is too large for this drift; use dt <= {suggested:.3e} s")]
    StepTooLarge { dt: f64, suggested: f64 },

    #[error("trajectory diverged at step {step}")]
    Diverged { step: usize },

    #[error(
        "ambiguous branch selection: slowest optical decay {optical:.6e} is within 10% of \
         mechanical decay {mechanical:.6e}"
    )]
    AmbiguousBranches { mechanical: f64, optical: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no crossing of {level} within the sweep range")]
    NoCrossing { level: f64 },

    #[error("maximum lies on the sweep boundary (row {index}); extend the sweep range")]
    BoundaryMaximum { index: usize },

    #[error("no plateau detected in the last 20% of the record; use a longer window")]
    NoPlateau,
}

pub type Result<T> = std::result::Result<T, Error>;
