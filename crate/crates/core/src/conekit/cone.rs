use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-coordinate constraint of a [`Cone::Coordinate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Free,
    NonNeg,
    NonPos,
    Zero,
}

/// Closed cone of admissible control values.
///
/// Every variant contains the origin and is closed under nonnegative
/// scaling. `Union` is the only variant that may fail to be convex; it is
/// accepted wherever a closed cone suffices and rejected where duality is
/// needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cone {
    FullSpace { dim: usize },
    Coordinate { signs: Vec<Sign> },
    Ray { generator: Vec<f64> },
    Union { members: Vec<Cone> },
}

impl Cone {
    pub fn full(dim: usize) -> Self {
        Cone::FullSpace { dim }
    }

    pub fn orthant(dim: usize) -> Self {
        Cone::Coordinate {
            signs: vec![Sign::NonNeg; dim],
        }
    }

    pub fn coordinate(signs: Vec<Sign>) -> Self {
        Cone::Coordinate { signs }
    }

    pub fn ray(generator: Vec<f64>) -> Self {
        Cone::Ray { generator }
    }

    pub fn union(members: Vec<Cone>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Argument("union of zero cones".into()))?;
        let dim = first.dim();
        for m in &members {
            if m.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: m.dim(),
                });
            }
        }
        Ok(Cone::Union { members })
    }

    pub fn dim(&self) -> usize {
        match self {
            Cone::FullSpace { dim } => *dim,
            Cone::Coordinate { signs } => signs.len(),
            Cone::Ray { generator } => generator.len(),
            Cone::Union { members } => members.first().map_or(0, Cone::dim),
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            Cone::Union { members } => members.len() == 1 && members[0].is_convex(),
            _ => true,
        }
    }

    /// `-v ∈ Π` whenever `v ∈ Π`.
    pub fn is_symmetric(&self) -> bool {
        match self {
            Cone::FullSpace { .. } => true,
            Cone::Coordinate { signs } => signs.iter().all(|s| matches!(s, Sign::Free | Sign::Zero)),
            Cone::Ray { generator } => generator.iter().all(|g| *g == 0.0),
            Cone::Union { members } => {
                // Sufficient condition only.
                members.iter().all(Cone::is_symmetric)
            }
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        let mut out = x.clone();
        self.project_into(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Projection onto `Π ∩ {|v| ≤ radius}`: project onto the cone, then clip
    /// radially. Exact for convex cones; for unions each member is handled
    /// separately and the nearest candidate wins.
    pub fn project_ball(&self, x: &DVector<f64>, radius: f64) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        if !(radius >= 0.0) {
            return Err(Error::Argument(format!("ball radius {radius} must be >= 0")));
        }
        let mut out = x.clone();
        self.project_ball_into(x.as_slice(), radius, out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn project_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Cone::FullSpace { .. } => out.copy_from_slice(x),
            Cone::Coordinate { signs } => {
                for ((o, xi), s) in out.iter_mut().zip(x).zip(signs) {
                    *o = match s {
                        Sign::Free => *xi,
                        Sign::NonNeg => xi.max(0.0),
                        Sign::NonPos => xi.min(0.0),
                        Sign::Zero => 0.0,
                    };
                }
            }
            Cone::Ray { generator } => {
                let gg: f64 = generator.iter().map(|g| g * g).sum();
                let scale = if gg > 0.0 {
                    let gx: f64 = generator.iter().zip(x).map(|(g, xi)| g * xi).sum();
                    (gx / gg).max(0.0)
                } else {
                    0.0
                };
                for (o, g) in out.iter_mut().zip(generator) {
                    *o = scale * g;
                }
            }
            Cone::Union { members } => nearest_member(members, x, out, |c, x, o| c.project_into(x, o)),
        }
    }

    pub(crate) fn project_ball_into(&self, x: &[f64], radius: f64, out: &mut [f64]) {
        match self {
            Cone::Union { members } => nearest_member(members, x, out, |c, x, o| {
                c.project_ball_into(x, radius, o)
            }),
            _ => {
                self.project_into(x, out);
                let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > radius {
                    let s = radius / norm;
                    out.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }

    /// Whether `y` lies in the dual cone `{y : yᵀv ≤ 0 for all v ∈ Π}` up to
    /// `tol`, decided through `sup{yᵀv : v ∈ Π, |v| ≤ 1}`.
    pub fn dual_membership(&self, y: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.support_on_unit_ball(y)? <= tol)
    }

    /// `sup{yᵀv : v ∈ Π, |v| ≤ 1}`, which for a convex cone equals the norm of
    /// the projection of `y` onto `Π`.
    pub fn support_on_unit_ball(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_dim(y.len())?;
        match self {
            Cone::FullSpace { .. } => Ok(y.norm()),
            Cone::Coordinate { signs } => Ok(signs
                .iter()
                .zip(y.iter())
                .map(|(s, yi)| match s {
                    Sign::Free => yi * yi,
                    Sign::NonNeg => yi.max(0.0).powi(2),
                    Sign::NonPos => yi.min(0.0).powi(2),
                    Sign::Zero => 0.0,
                })
                .sum::<f64>()
                .sqrt()),
            Cone::Ray { generator } => {
                let gn = generator.iter().map(|g| g * g).sum::<f64>().sqrt();
                if gn == 0.0 {
                    return Ok(0.0);
                }
                let gy: f64 = generator.iter().zip(y.iter()).map(|(g, yi)| g * yi).sum();
                Ok((gy / gn).max(0.0))
            }
            Cone::Union { .. } if self.is_convex() => match self {
                Cone::Union { members } => members[0].support_on_unit_ball(y),
                _ => unreachable!(),
            },
            Cone::Union { .. } => Err(Error::Unsupported(
                "dual cone of a non-convex union".into(),
            )),
        }
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        match self.project(v) {
            Ok(p) => (p - v).norm() <= tol * v.norm().max(1.0),
            Err(_) => false,
        }
    }
}

fn nearest_member(
    members: &[Cone],
    x: &[f64],
    out: &mut [f64],
    project: impl Fn(&Cone, &[f64], &mut [f64]),
) {
    let mut best = f64::INFINITY;
    let mut scratch = vec![0.0; x.len()];
    for c in members {
        project(c, x, &mut scratch);
        let d: f64 = scratch.iter().zip(x).map(|(p, xi)| (p - xi).powi(2)).sum();
        if d < best {
            best = d;
            out.copy_from_slice(&scratch);
        }
    }
}
