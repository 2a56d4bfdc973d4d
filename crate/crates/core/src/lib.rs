//! Coupled two-dimensional Riccati equations with jumps and their uses.
//!
//! The crate is organised around five pieces:
//!
//! - [`conekit`]: constraint cones and the piecewise-quadratic minimisation
//!   that defines the Riccati generators and the optimal feedback gains.
//! - [`sre`]: backward solver for the coupled Riccati system under
//!   deterministic coefficients, with a-priori bound checks.
//! - [`bsdej`]: a recombining lattice for multi-dimensional backward
//!   equations with jumps, used to exercise comparison results.
//! - [`simulate`]: Monte Carlo for the controlled linear jump SDE.
//! - [`meanvariance`]: cone-constrained mean-variance portfolio selection.

pub mod bsdej;
pub mod conekit;
pub mod error;
pub mod io;
pub mod linalg;
pub mod meanvariance;
pub mod simulate;
pub mod sre;

pub use conekit::{Cone, HInput, HMark, Minimizer, Sign, Which};
pub use error::{Error, ErrorClass, Result};
pub use sre::{LqCoefficients, LqMark, RiccatiSolution, Scheme, SolverCase, SreOptions};
pub use meanvariance::{FrontierResult, FrontierRow, MarketMark, MarketModel, MvSolution};
pub use simulate::{Control, PathConfig, PathRecord, SimReport};

pub use nalgebra::{DMatrix, DVector};
