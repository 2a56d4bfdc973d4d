use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("solver diverged: {0}")]
    Divergence(String),

    #[error("step size too large: lipschitz * dt = {0}")]
    StepSize(f64),

    #[error("lattice too large: {nodes} entries exceeds capacity {capacity}")]
    Capacity { nodes: u128, capacity: u128 },

    #[error("comparison certificate rejected: {0}")]
    Certificate(String),

    #[error("path {path} blew up at step {step}")]
    BlowUp { path: usize, step: usize },

    #[error("mean-variance problem is infeasible: drift lies in the dual cone everywhere")]
    Infeasible,

    #[error("degenerate market: P2(0) * exp(-2 int r) = {0} is not below 1")]
    DegenerateMarket(f64),
}

/// Coarse classification used by front ends to pick exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Solver,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Argument(_)
            | Error::Dimension { .. }
            | Error::Invariant(_)
            | Error::Unsupported(_)
            | Error::Capacity { .. }
            | Error::Certificate(_)
            | Error::Infeasible => ErrorClass::Validation,
            Error::Numeric(_)
            | Error::Convergence { .. }
            | Error::Divergence(_)
            | Error::StepSize(_)
            | Error::BlowUp { .. }
            | Error::DegenerateMarket(_) => ErrorClass::Solver,
        }
    }
}
