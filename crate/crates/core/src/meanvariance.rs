//! Cone-constrained mean-variance portfolio selection with jumps.
//!
//! Wealth follows
//! `dX = (rX + μᵀπ)dt + πᵀσ dW + Σ_e πᵀF_e dÑ_e`, `π ∈ Π`.
//! Minimising `Var(X_T)` subject to `E[X_T] = z` is relaxed with a
//! multiplier `λ`; in the shifted state `X - λe^{-∫_t^T r}` the relaxed
//! problem is a singular LQ problem whose Riccati system does not involve `λ`,
//! so one solve serves the whole frontier.

use nalgebra::{DMatrix, DVector};

use crate::conekit::Cone;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sre::{solve_sre, LqCoefficients, LqMark, RiccatiSolution, SreOptions};

/// Largest admissible `P₂(0)e^{-2∫r}`; anything closer to one is treated as
/// a degenerate market.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketMark {
    /// Relative jump sizes of the `m` assets, per interval.
    pub f: Vec<DVector<f64>>,
    pub nu: f64,
}

/// Deterministic market on a uniform grid of `K` intervals; `sigma` is
/// `m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub horizon: f64,
    pub r: Vec<f64>,
    pub mu: Vec<DVector<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
    pub marks: Vec<MarketMark>,
    pub cone: Cone,
    pub x0: f64,
}

/// `X ↦ X - λe^{-∫_t^T r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateShift {
    pub lambda: f64,
    horizon: f64,
    r: Vec<f64>,
}

impl StateShift {
    pub fn at(&self, t: f64) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        self.lambda * (-rate_integral(&self.r, self.horizon, t)).exp()
    }
}

/// `∫_t^T r(s) ds` for `r` piecewise constant on a uniform grid.
fn rate_integral(r: &[f64], horizon: f64, t: f64) -> f64 {
    let k = r.len();
    let h = horizon / k as f64;
    let t = t.clamp(0.0, horizon);
    r.iter()
        .enumerate()
        .map(|(i, &ri)| {
            let lo = (i as f64 * h).max(t);
            let hi = (i + 1) as f64 * h;
            ri * (hi - lo).max(0.0)
        })
        .sum()
}

impl MarketModel {
    /// Time-constant market; marks are `(F, ν)`.
    pub fn constant(
        horizon: f64,
        r: f64,
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        marks: Vec<(DVector<f64>, f64)>,
        cone: Cone,
        x0: f64,
    ) -> Self {
        MarketModel {
            horizon,
            r: vec![r],
            mu: vec![mu],
            sigma: vec![sigma],
            marks: marks
                .into_iter()
                .map(|(f, nu)| MarketMark { f: vec![f], nu })
                .collect(),
            cone,
            x0,
        }
    }

    pub fn intervals(&self) -> usize {
        self.r.len()
    }

    pub fn assets(&self) -> usize {
        self.mu.first().map_or(0, |m| m.len())
    }

    /// Checks shapes, convexity of the cone and the uniform ellipticity
    /// `σσᵀ + Σ ν F Fᵀ ≥ δI`; returns `δ`.
    pub fn validate(&self) -> Result<f64> {
        let k = self.intervals();
        if k == 0 || !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Argument("market needs a positive horizon and at least one interval".into()));
        }
        if !self.x0.is_finite() {
            return Err(Error::Argument(format!("initial wealth {}", self.x0)));
        }
        let m = self.assets();
        let n = self.sigma[0].ncols();
        if m == 0 {
            return Err(Error::Argument("market has no risky asset".into()));
        }
        for (name, len) in [("mu", self.mu.len()), ("sigma", self.sigma.len())] {
            if len != k {
                return Err(Error::Argument(format!("{name} has {len} intervals, expected {k}")));
            }
        }
        for i in 0..k {
            if self.mu[i].len() != m {
                return Err(Error::Dimension { expected: m, got: self.mu[i].len() });
            }
            if self.sigma[i].shape() != (m, n) {
                return Err(Error::Argument(format!(
                    "sigma must be {m}x{n} on every interval, got {:?}",
                    self.sigma[i].shape()
                )));
            }
        }
        for mk in &self.marks {
            if mk.f.len() != k || mk.f.iter().any(|f| f.len() != m) {
                return Err(Error::Argument("jump sizes must be m-vectors on every interval".into()));
            }
            if !(mk.nu >= 0.0) || !mk.nu.is_finite() {
                return Err(Error::Argument(format!("jump intensity {}", mk.nu)));
            }
        }
        let finite = self.r.iter().all(|v| v.is_finite())
            && self.mu.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.sigma.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.marks.iter().all(|mk| mk.f.iter().all(|v| v.iter().all(|x| x.is_finite())));
        if !finite {
            return Err(Error::Argument("market coefficients must be finite".into()));
        }
        if self.cone.dim() != m {
            return Err(Error::Dimension { expected: m, got: self.cone.dim() });
        }
        if !self.cone.is_convex() {
            return Err(Error::Unsupported("mean-variance needs a convex cone".into()));
        }
        let delta = (0..k)
            .map(|i| linalg::min_eigenvalue(&self.gram(i)))
            .fold(f64::INFINITY, f64::min);
        if !(delta > 0.0) {
            return Err(Error::Argument(format!(
                "sigma sigma^T + sum nu F F^T is not uniformly positive definite (min eigenvalue {delta:e})"
            )));
        }
        Ok(delta)
    }

    fn gram(&self, i: usize) -> DMatrix<f64> {
        let mut g = &self.sigma[i] * self.sigma[i].transpose();
        for mk in &self.marks {
            g += &mk.f[i] * mk.f[i].transpose() * mk.nu;
        }
        g
    }

    /// `∫_t^T r`.
    pub fn rate_integral(&self, t: f64) -> f64 {
        rate_integral(&self.r, self.horizon, t)
    }

    /// `e^{-∫_0^T r}`.
    pub fn discount(&self) -> f64 {
        (-self.rate_integral(0.0)).exp()
    }

    /// Mean of riskless growth `x0 e^{∫r}`, the smallest admissible target.
    pub fn riskless_target(&self) -> f64 {
        self.x0 / self.discount()
    }

    /// LQ data `A = r, B = μ, C = 0, D = σᵀ, E = 0, F, Q = R = S = 0, G = 1`
    /// and the state shift for multiplier `lambda`.
    pub fn to_lq(&self, lambda: f64) -> (LqCoefficients, StateShift) {
        let k = self.intervals();
        let m = self.assets();
        let n = self.sigma.first().map_or(0, |s| s.ncols());
        let coeffs = LqCoefficients {
            horizon: self.horizon,
            a: self.r.clone(),
            b: self.mu.clone(),
            c: vec![DVector::zeros(n); k],
            d: self.sigma.iter().map(|s| s.transpose()).collect(),
            q: vec![0.0; k],
            r: vec![DMatrix::zeros(m, m); k],
            s: vec![DVector::zeros(m); k],
            g: 1.0,
            marks: self
                .marks
                .iter()
                .map(|mk| LqMark {
                    e: vec![0.0; k],
                    f: mk.f.clone(),
                    nu: mk.nu,
                })
                .collect(),
        };
        let shift = StateShift {
            lambda,
            horizon: self.horizon,
            r: self.r.clone(),
        };
        (coeffs, shift)
    }

    /// Whether `μ_t` leaves the dual cone on a set of positive measure,
    /// i.e. on at least one grid interval.
    pub fn check_feasibility(&self) -> Result<bool> {
        for mu in &self.mu {
            if !self.cone.dual_membership(mu, 1e-12)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// The Riccati solve shared by every target.
#[derive(Debug, Clone)]
pub struct PreparedMv {
    pub model: MarketModel,
    pub coeffs: LqCoefficients,
    pub riccati: RiccatiSolution,
    pub delta: f64,
    pub p10: f64,
    pub p20: f64,
    /// `e^{-∫_0^T r}`.
    pub discount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierRow {
    pub z: f64,
    pub lambda_star: f64,
    pub variance: f64,
    /// Relaxed value `V(x0, λ*; z)`; equals `variance` by duality.
    pub v_relaxed: f64,
}

impl FrontierRow {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

impl PreparedMv {
    pub fn new(model: &MarketModel, opts: &SreOptions) -> Result<Self> {
        let delta = model.validate()?;
        if !model.check_feasibility()? {
            return Err(Error::Infeasible);
        }
        let (coeffs, _) = model.to_lq(0.0);
        let riccati = solve_sre(&coeffs, &model.cone, opts)?;
        let discount = model.discount();
        let p10 = riccati.p1[0];
        let p20 = riccati.p2[0];
        let level = p20 * discount * discount;
        if level >= 1.0 - DEGENERACY_TOL {
            return Err(Error::DegenerateMarket(level));
        }
        Ok(PreparedMv {
            model: model.clone(),
            coeffs,
            riccati,
            delta,
            p10,
            p20,
            discount,
        })
    }

    /// `P₂(0)e^{-2∫r}`, strictly below one.
    pub fn level(&self) -> f64 {
        self.p20 * self.discount * self.discount
    }

    /// `min E[(X_T - λ)²] - (λ - z)²` over admissible portfolios.
    pub fn relaxed_value(&self, lambda: f64, z: f64) -> f64 {
        let y = self.model.x0 - lambda * self.discount;
        self.riccati.value(y) - (lambda - z).powi(2)
    }

    pub fn row(&self, z: f64) -> Result<FrontierRow> {
        let base = self.model.riskless_target();
        if !z.is_finite() || z < base - 1e-12 * base.abs().max(1.0) {
            return Err(Error::Argument(format!(
                "target {z} is below the riskless growth {base}"
            )));
        }
        let gap = (z - base).max(0.0);
        let d = self.discount;
        let level = self.level();
        let lambda_star = (z - self.model.x0 * self.p20 * d) / (1.0 - level);
        let variance = level / (1.0 - level) * gap * gap;
        Ok(FrontierRow {
            z,
            lambda_star,
            variance,
            v_relaxed: self.relaxed_value(lambda_star, z),
        })
    }

    pub fn solve(&self, z: f64) -> Result<MvSolution> {
        let row = self.row(z)?;
        Ok(MvSolution {
            row,
            p20: self.p20,
            discount: self.discount,
            shift: self.model.to_lq(row.lambda_star).1,
            riccati: self.riccati.clone(),
        })
    }
}

/// Efficient strategy for one target.
#[derive(Debug, Clone)]
pub struct MvSolution {
    pub row: FrontierRow,
    pub p20: f64,
    pub discount: f64,
    pub shift: StateShift,
    /// Feedback gains acting on `X - shift(t)`.
    pub riccati: RiccatiSolution,
}

impl MvSolution {
    pub fn lambda_star(&self) -> f64 {
        self.row.lambda_star
    }

    pub fn variance(&self) -> f64 {
        self.row.variance
    }

    /// Efficient portfolio at wealth `x` (pre-jump), time `t`.
    pub fn portfolio(&self, t: f64, x: f64) -> Result<DVector<f64>> {
        self.riccati.feedback(t, x - self.shift.at(t))
    }

    /// Initial value of the shifted state, always `≤ 0`.
    pub fn relative_x0(&self, x0: f64) -> f64 {
        x0 - self.shift.at(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct FrontierResult {
    pub p10: f64,
    pub p20: f64,
    pub discount: f64,
    pub delta: f64,
    pub rows: Vec<FrontierRow>,
}

pub fn solve_mv(model: &MarketModel, z: f64, opts: &SreOptions) -> Result<MvSolution> {
    PreparedMv::new(model, opts)?.solve(z)
}

pub fn efficient_frontier(model: &MarketModel, opts: &SreOptions, z_grid: &[f64]) -> Result<FrontierResult> {
    let prep = PreparedMv::new(model, opts)?;
    let rows = z_grid.iter().map(|&z| prep.row(z)).collect::<Result<_>>()?;
    Ok(FrontierResult {
        p10: prep.p10,
        p20: prep.p20,
        discount: prep.discount,
        delta: prep.delta,
        rows,
    })
}
