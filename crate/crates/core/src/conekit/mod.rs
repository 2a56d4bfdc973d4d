//! Cones, projections and the convex piecewise-quadratic minimisation that
//! defines the Riccati generators and the optimal feedback gains.

mod cone;
mod minimize;
mod objective;

pub use cone::{Cone, Sign};
pub use minimize::{exact_minimize_1d, MinimizeResult, Minimizer};
pub use objective::{HInput, HMark, Piece, PiecewiseQuadratic, Which};

