use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iters} iterations (relative change {change:.3e})")]
    NonConverged { iters: usize, change: f64 },

    #[error("constraint infeasible: residual {residual:.6e} exceeds {delta:.6e} at the largest multiplier")]
    Infeasible { residual: f64, delta: f64 },

    #[error("multiplier bracketing failed: {0}")]
    BracketFailure(String),

    #[error("signal has zero norm")]
    ZeroSignal,

    #[error("reference has zero dynamic range")]
    DegenerateReference,

    #[error("subgradient certificate failed: violation {violation:.3e} > tolerance {tolerance:.3e}")]
    CertificateFailure { violation: f64, tolerance: f64 },

    #[error("discrepancy level {target:.6e} not reached after {steps} steps (residual {residual:.6e})")]
    DiscrepancyNeverMet {
        steps: usize,
        residual: f64,
        target: f64,
    },

    #[error("regularizer is not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
