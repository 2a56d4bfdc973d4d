//! Backward solution of the stochastic Riccati system in the deterministic
//! coefficient case, with a priori bounds and the optimal feedback.

mod coefficients;
mod solver;

pub use coefficients::{LqCoefficients, LqMark, SolverCase};
pub use solver::{solve_sre, solve_truncated, BoundReport, RiccatiSolution, Scheme, SreOptions};
