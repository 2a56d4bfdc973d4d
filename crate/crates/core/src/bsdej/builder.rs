use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nondecreasing Lipschitz scalar maps used in cross-component coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncreasingMap {
    Identity,
    /// Piecewise linear through `(knee, 0)` with slopes `slope_low` left of the
    /// knee and `slope_high` right of it.
    Ramp {
        slope_low: f64,
        slope_high: f64,
        knee: f64,
    },
    /// `min(max(x, lo), hi)`.
    Clamp { lo: f64, hi: f64 },
}

impl IncreasingMap {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            IncreasingMap::Identity => x,
            IncreasingMap::Ramp {
                slope_low,
                slope_high,
                knee,
            } => {
                let d = x - knee;
                if d <= 0.0 {
                    slope_low * d
                } else {
                    slope_high * d
                }
            }
            IncreasingMap::Clamp { lo, hi } => x.max(lo).min(hi),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            IncreasingMap::Identity => 1.0,
            IncreasingMap::Ramp {
                slope_low,
                slope_high,
                ..
            } => slope_low.abs().max(slope_high.abs()),
            IncreasingMap::Clamp { .. } => 1.0,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        match *self {
            IncreasingMap::Identity => Ok(()),
            IncreasingMap::Ramp {
                slope_low,
                slope_high,
                knee,
            } => {
                if !(slope_low >= 0.0 && slope_high >= 0.0) || !knee.is_finite() || !slope_high.is_finite() {
                    return Err(format!("ramp slopes must be finite and >= 0, got {slope_low}, {slope_high}"));
                }
                Ok(())
            }
            IncreasingMap::Clamp { lo, hi } => {
                if !(lo <= hi) {
                    return Err(format!("clamp bounds out of order: {lo} > {hi}"));
                }
                Ok(())
            }
        }
    }
}

/// `weight · h(Σ_e ν_e (y_from + φ_{from,e}))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTerm {
    pub from: usize,
    pub weight: f64,
    pub map: IncreasingMap,
}

/// Bounded time-only forcing `constant + amplitude · sin(2π frequency t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Source {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub frequency: f64,
}

impl Source {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if self.amplitude == 0.0 {
            self.constant
        } else {
            self.constant + self.amplitude * (std::f64::consts::TAU * self.frequency * t).sin()
        }
    }
}

/// One component `f_i` of a generator:
/// `Σ_j y[j]·y_j + z·z_i + Σ_e gamma[e]·ν_e·φ_{i,e} + Σ cross + source(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentGenerator {
    pub y: Vec<f64>,
    #[serde(default)]
    pub z: f64,
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub cross: Vec<CrossTerm>,
    #[serde(default)]
    pub source: Source,
}

impl ComponentGenerator {
    pub fn zero(dim: usize, marks: usize) -> Self {
        ComponentGenerator {
            y: vec![0.0; dim],
            z: 0.0,
            gamma: vec![0.0; marks],
            cross: Vec::new(),
            source: Source::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub components: Vec<ComponentGenerator>,
}

impl GeneratorSpec {
    pub fn zero(dim: usize, marks: usize) -> Self {
        GeneratorSpec {
            components: vec![ComponentGenerator::zero(dim, marks); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub(crate) fn validate(&self, marks: usize) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::Argument("generator has no components".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.y.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: c.y.len(),
                });
            }
            if c.gamma.len() != marks {
                return Err(Error::Dimension {
                    expected: marks,
                    got: c.gamma.len(),
                });
            }
            let finite = c.y.iter().chain(&c.gamma).all(|v| v.is_finite())
                && c.z.is_finite()
                && c.source.constant.is_finite()
                && c.source.amplitude.is_finite()
                && c.source.frequency.is_finite();
            if !finite {
                return Err(Error::Argument(format!("component {i} has non-finite coefficients")));
            }
            for x in &c.cross {
                if x.from >= dim {
                    return Err(Error::Argument(format!(
                        "cross term of component {i} refers to component {}",
                        x.from
                    )));
                }
                if !x.weight.is_finite() {
                    return Err(Error::Argument(format!("component {i} has a non-finite cross weight")));
                }
                x.map.check().map_err(Error::Argument)?;
            }
        }
        Ok(())
    }

    /// Lipschitz constant in `y` of the implicit part of the step. With
    /// `through_cross` the cross terms count too (they read `y` directly in the
    /// literal discretisation).
    pub fn y_lipschitz(&self, nu: &[f64], through_cross: bool) -> f64 {
        let total_nu: f64 = nu.iter().sum();
        self.components
            .iter()
            .map(|c| {
                let lin: f64 = c.y.iter().map(|a| a.abs()).sum();
                let cross: f64 = if through_cross {
                    c.cross
                        .iter()
                        .map(|x| x.weight.abs() * x.map.lipschitz() * total_nu)
                        .sum()
                } else {
                    0.0
                };
                lin + cross
            })
            .fold(0.0, f64::max)
    }

    /// Structural hypotheses of the comparison theorem, checked on the
    /// builder: `γ ≥ -1`, increasing dependence on the other components,
    /// plus the step-size conditions that keep every branch weight of the
    /// monotone scheme nonnegative.
    pub fn certify(&self, nu: &[f64], dt: f64) -> std::result::Result<(), String> {
        for (i, c) in self.components.iter().enumerate() {
            for (e, &g) in c.gamma.iter().enumerate() {
                if g < -1.0 {
                    return Err(format!("component {i}, mark {e}: gamma = {g} < -1"));
                }
            }
            let mut off = 0.0;
            for (j, &a) in c.y.iter().enumerate() {
                if j != i {
                    if a < 0.0 {
                        return Err(format!("component {i} decreases in y_{j} (coefficient {a})"));
                    }
                    off += a;
                }
            }
            for x in &c.cross {
                if x.from == i {
                    return Err(format!("component {i} has a cross term on itself"));
                }
                if x.weight < 0.0 {
                    return Err(format!("component {i} has a negative cross weight {}", x.weight));
                }
            }
            if dt * (off - c.y[i]) >= 1.0 || 1.0 - dt * c.y[i] <= dt * off {
                return Err(format!("component {i}: implicit step is not inverse-monotone at dt = {dt}"));
            }
            let tilt: f64 = c
                .gamma
                .iter()
                .zip(nu)
                .map(|(g, n)| n * (1.0 + g))
                .sum();
            if c.z.abs() * dt.sqrt() > 1.0 - dt * tilt {
                return Err(format!(
                    "component {i}: no-jump branch weight negative (|z coefficient| * sqrt(dt) too large)"
                ));
            }
        }
        Ok(())
    }
}

/// Building blocks for terminal conditions `g(W, jump counts)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalTerm {
    Constant { value: f64 },
    LinearW { coef: f64 },
    /// `coef · (W - strike)⁺`
    CallW { coef: f64, strike: f64 },
    /// `coef · (strike - W)⁺`
    PutW { coef: f64, strike: f64 },
    /// `coef · N_mark`
    JumpCount { mark: usize, coef: f64 },
    /// `coef · 1{N_mark > 0}`
    JumpIndicator { mark: usize, coef: f64 },
}

impl TerminalTerm {
    #[inline]
    fn eval(&self, w: f64, counts: &[u32]) -> f64 {
        match *self {
            TerminalTerm::Constant { value } => value,
            TerminalTerm::LinearW { coef } => coef * w,
            TerminalTerm::CallW { coef, strike } => coef * (w - strike).max(0.0),
            TerminalTerm::PutW { coef, strike } => coef * (strike - w).max(0.0),
            TerminalTerm::JumpCount { mark, coef } => coef * f64::from(counts[mark]),
            TerminalTerm::JumpIndicator { mark, coef } => {
                if counts[mark] > 0 {
                    coef
                } else {
                    0.0
                }
            }
        }
    }

    fn mark(&self) -> Option<usize> {
        match *self {
            TerminalTerm::JumpCount { mark, .. } | TerminalTerm::JumpIndicator { mark, .. } => Some(mark),
            _ => None,
        }
    }
}

/// Terminal condition: component `i` is the sum of `components[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalSpec {
    pub components: Vec<Vec<TerminalTerm>>,
}

impl TerminalSpec {
    pub fn constant(values: &[f64]) -> Self {
        TerminalSpec {
            components: values
                .iter()
                .map(|&value| vec![TerminalTerm::Constant { value }])
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub(crate) fn validate(&self, dim: usize, marks: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: self.dim(),
            });
        }
        for terms in &self.components {
            for t in terms {
                if let Some(m) = t.mark() {
                    if m >= marks {
                        return Err(Error::Argument(format!("terminal term refers to mark {m}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes `g(W, counts)` into `out`.
    #[inline]
    pub fn eval_into(&self, w: f64, counts: &[u32], out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.components) {
            *o = terms.iter().map(|t| t.eval(w, counts)).sum();
        }
    }
}
