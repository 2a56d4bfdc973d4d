use nalgebra::DVector;

use super::coefficients::{LqCoefficients, SolverCase};
use crate::conekit::{Cone, Minimizer, Which};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Rk4,
    ImplicitEuler,
}

#[derive(Debug, Clone)]
pub struct SreOptions {
    pub steps: usize,
    pub scheme: Scheme,
    pub minimizer: Minimizer,
    /// Largest tolerated violation of the a priori bounds.
    pub bound_tol: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl Default for SreOptions {
    fn default() -> Self {
        SreOptions {
            steps: 2000,
            scheme: Scheme::Rk4,
            minimizer: Minimizer::default(),
            bound_tol: 1e-7,
            picard_tol: 1e-12,
            picard_max_iter: 100,
        }
    }
}

impl SreOptions {
    pub fn with_steps(steps: usize) -> Self {
        SreOptions {
            steps,
            ..Default::default()
        }
    }
}

/// `(P₁, P₂)` and the minimisers `v̂₁, v̂₂` on a uniform grid `t_k = kT/N`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub v1: Vec<DVector<f64>>,
    pub v2: Vec<DVector<f64>>,
    pub case: SolverCase,
    pub cone: Cone,
    /// Ball radius for a truncated solve.
    pub radius: Option<f64>,
    pub bounds: BoundReport,
}

/// Outcome of checking a solution against its a priori bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub upper_rate: f64,
    pub upper: f64,
    /// `max(P - M)⁺` over the grid.
    pub upper_violation: f64,
    /// `max(-P)⁺` over the grid.
    pub negativity: f64,
    /// `(δ, c₂)` whenever the singular-case hypotheses hold.
    pub lower: Option<(f64, f64)>,
    /// `max(δe^{-c₂(T-t)} - P)⁺` over the grid, zero when no lower bound applies.
    pub lower_violation: f64,
}

impl BoundReport {
    pub fn max_violation(&self) -> f64 {
        self.upper_violation
            .max(self.negativity)
            .max(self.lower_violation)
    }
}

impl RiccatiSolution {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    /// Grid node at or just before `t`.
    pub fn node_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Argument(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        // Absorb rounding so that `k·dt` maps to node `k` on commensurate grids.
        let k = (t / self.dt() * (1.0 + 1e-12) + 1e-9).floor() as usize;
        Ok(k.min(self.steps()))
    }

    /// Optimal feedback `v̂₁(t)x⁺ + v̂₂(t)x⁻`.
    pub fn feedback(&self, t: f64, x: f64) -> Result<DVector<f64>> {
        let k = self.node_at(t)?;
        Ok(self.feedback_at(k, x))
    }

    pub(crate) fn feedback_at(&self, k: usize, x: f64) -> DVector<f64> {
        if x >= 0.0 {
            &self.v1[k] * x
        } else {
            &self.v2[k] * (-x)
        }
    }

    /// Optimal cost `P₁(0)(x⁺)² + P₂(0)(x⁻)²`.
    pub fn value(&self, x0: f64) -> f64 {
        let pos = x0.max(0.0);
        let neg = (-x0).max(0.0);
        self.p1[0] * pos * pos + self.p2[0] * neg * neg
    }
}

/// Backward integration of the coupled Riccati system over the full cone.
pub fn solve_sre(coeffs: &LqCoefficients, cone: &Cone, opts: &SreOptions) -> Result<RiccatiSolution> {
    solve(coeffs, cone, None, opts)
}

/// Same as [`solve_sre`] with controls restricted to `Π ∩ {|v| ≤ radius}`.
pub fn solve_truncated(
    coeffs: &LqCoefficients,
    cone: &Cone,
    radius: f64,
    opts: &SreOptions,
) -> Result<RiccatiSolution> {
    if !(radius >= 0.0) {
        return Err(Error::Argument(format!("radius {radius} must be >= 0")));
    }
    solve(coeffs, cone, Some(radius), opts)
}

struct Generator<'a> {
    coeffs: &'a LqCoefficients,
    cone: &'a Cone,
    radius: Option<f64>,
    minimizer: &'a Minimizer,
}

impl Generator<'_> {
    fn infima(&self, k: usize, p1: f64, p2: f64) -> Result<(f64, f64)> {
        let input = self.coeffs.h_input(k, p1.max(0.0), p2.max(0.0));
        let h1 = self.minimizer.minimize(&input, Which::H1, self.cone, self.radius)?;
        let h2 = self.minimizer.minimize(&input, Which::H2, self.cone, self.radius)?;
        Ok((h1.value, h2.value))
    }

    /// Right-hand side in backward time: `d/dτ P = (2A+CᵀC)P + Q + H*`.
    fn rate(&self, k: usize, p: (f64, f64)) -> Result<(f64, f64)> {
        let (h1, h2) = self.infima(k, p.0, p.1)?;
        let lin = self.coeffs.state_rate(k);
        let q = self.coeffs.q[k];
        Ok((lin * p.0 + q + h1, lin * p.1 + q + h2))
    }
}

fn solve(
    coeffs: &LqCoefficients,
    cone: &Cone,
    radius: Option<f64>,
    opts: &SreOptions,
) -> Result<RiccatiSolution> {
    coeffs.validate()?;
    if cone.dim() != coeffs.control_dim() {
        return Err(Error::Dimension {
            expected: coeffs.control_dim(),
            got: cone.dim(),
        });
    }
    if opts.steps == 0 {
        return Err(Error::Argument("step count must be positive".into()));
    }
    let case = coeffs.case().ok_or_else(|| {
        Error::Argument(
            "coefficients satisfy neither the standard nor the singular hypotheses".into(),
        )
    })?;

    let n = opts.steps;
    let h = coeffs.horizon / n as f64;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    let gen = Generator {
        coeffs,
        cone,
        radius,
        minimizer: &opts.minimizer,
    };

    let mut p1 = vec![0.0; n + 1];
    let mut p2 = vec![0.0; n + 1];
    p1[n] = coeffs.g;
    p2[n] = coeffs.g;
    let cap = 1e6 * coeffs.upper_bound().max(1.0);
    for step in (0..n).rev() {
        let k = coeffs.interval_at(times[step]);
        let prev = (p1[step + 1], p2[step + 1]);
        let next = match opts.scheme {
            Scheme::Rk4 => rk4_step(&gen, k, prev, h)?,
            Scheme::ImplicitEuler => implicit_step(&gen, k, prev, h, opts)?,
        };
        if !next.0.is_finite() || !next.1.is_finite() || next.0.abs() > cap || next.1.abs() > cap {
            return Err(Error::Divergence(format!(
                "P left the admissible range at t = {}",
                times[step]
            )));
        }
        p1[step] = next.0;
        p2[step] = next.1;
    }

    let mut v1 = Vec::with_capacity(n + 1);
    let mut v2 = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let k = coeffs.interval_at(times[i]);
        let input = coeffs.h_input(k, p1[i].max(0.0), p2[i].max(0.0));
        v1.push(opts.minimizer.minimize(&input, Which::H1, cone, radius)?.v_hat);
        v2.push(opts.minimizer.minimize(&input, Which::H2, cone, radius)?.v_hat);
    }

    let bounds = check_bounds(coeffs, &times, &p1, &p2);
    if bounds.max_violation() > opts.bound_tol {
        return Err(Error::Divergence(format!(
            "a priori bounds violated by {:e}",
            bounds.max_violation()
        )));
    }

    Ok(RiccatiSolution {
        horizon: coeffs.horizon,
        times,
        p1,
        p2,
        v1,
        v2,
        case,
        cone: cone.clone(),
        radius,
        bounds,
    })
}

fn rk4_step(gen: &Generator, k: usize, p: (f64, f64), h: f64) -> Result<(f64, f64)> {
    let add = |p: (f64, f64), r: (f64, f64), s: f64| (p.0 + s * r.0, p.1 + s * r.1);
    let k1 = gen.rate(k, p)?;
    let k2 = gen.rate(k, add(p, k1, 0.5 * h))?;
    let k3 = gen.rate(k, add(p, k2, 0.5 * h))?;
    let k4 = gen.rate(k, add(p, k3, h))?;
    Ok((
        p.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        p.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    ))
}

fn implicit_step(
    gen: &Generator,
    k: usize,
    prev: (f64, f64),
    h: f64,
    opts: &SreOptions,
) -> Result<(f64, f64)> {
    let mut cur = prev;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.picard_max_iter {
        let r = gen.rate(k, cur)?;
        let next = (prev.0 + h * r.0, prev.1 + h * r.1);
        residual = (next.0 - cur.0).abs().max((next.1 - cur.1).abs());
        cur = next;
        if residual <= opts.picard_tol * (1.0 + cur.0.abs().max(cur.1.abs())) {
            return Ok(cur);
        }
    }
    Err(Error::Convergence {
        iterations: opts.picard_max_iter,
        residual,
    })
}

fn check_bounds(coeffs: &LqCoefficients, times: &[f64], p1: &[f64], p2: &[f64]) -> BoundReport {
    let upper_rate = coeffs.upper_bound_rate();
    let upper = coeffs.upper_bound();
    let lower = coeffs.lower_bound_constants();
    let mut report = BoundReport {
        upper_rate,
        upper,
        upper_violation: 0.0,
        negativity: 0.0,
        lower,
        lower_violation: 0.0,
    };
    for ((&t, &a), &b) in times.iter().zip(p1).zip(p2) {
        let top = a.max(b);
        let bottom = a.min(b);
        report.upper_violation = report.upper_violation.max(top - upper);
        report.negativity = report.negativity.max(-bottom);
        if let Some((delta, c2)) = lower {
            let floor = delta * (-c2 * (coeffs.horizon - t)).exp();
            report.lower_violation = report.lower_violation.max(floor - bottom);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn merton() -> LqCoefficients {
        LqCoefficients::scalar(1.0, 0.03, 0.2, 0.0, 0.3, 0.0, 0.0, 0.0, 1.0, &[])
    }

    #[test]
    fn terminal_condition_holds() {
        let k = merton();
        let sol = solve_sre(&k, &Cone::full(1), &SreOptions::with_steps(50)).unwrap();
        assert_eq!(sol.p1[50], 1.0);
        assert_eq!(sol.p2[50], 1.0);
        assert_eq!(sol.case, SolverCase::Singular);
    }

    #[test]
    fn unconstrained_no_jump_closed_form() {
        // With Π = ℝ and no jumps both components solve
        // P' = -(2r - θ²)P, θ = μ/σ.
        let k = merton();
        let sol = solve_sre(&k, &Cone::full(1), &SreOptions::with_steps(200)).unwrap();
        let theta2 = (0.2f64 / 0.3).powi(2);
        for (i, &t) in sol.times.iter().enumerate() {
            let exact = ((2.0 * 0.03 - theta2) * (1.0 - t)).exp();
            assert_relative_eq!(sol.p1[i], exact, max_relative = 1e-10);
            assert_relative_eq!(sol.p2[i], exact, max_relative = 1e-10);
        }
        // v̂₁ = -θ/σ, v̂₂ = +θ/σ.
        assert_relative_eq!(sol.v1[0][0], -0.2 / 0.09, max_relative = 1e-8);
        assert_relative_eq!(sol.v2[0][0], 0.2 / 0.09, max_relative = 1e-8);
    }

    #[test]
    fn implicit_scheme_agrees() {
        let k = merton();
        let mut opts = SreOptions::with_steps(400);
        opts.scheme = Scheme::ImplicitEuler;
        let sol = solve_sre(&k, &Cone::full(1), &opts).unwrap();
        let exact = (2.0 * 0.03 - (0.2f64 / 0.3).powi(2)).exp();
        assert_relative_eq!(sol.p1[0], exact, max_relative = 2e-3);
    }

    #[test]
    fn long_only_zero_drift_is_riskless() {
        // Π = ℝ₊ and μ > 0: the unconstrained H₁ minimiser is negative, so
        // v̂₁ = 0 and P₁(0) = e^{2rT}.
        let k = LqCoefficients::scalar(1.0, 0.05, 0.1, 0.0, 0.2, 0.0, 0.0, 0.0, 1.0, &[]);
        let sol = solve_sre(&k, &Cone::orthant(1), &SreOptions::with_steps(100)).unwrap();
        assert_relative_eq!(sol.p1[0], (0.1f64).exp(), max_relative = 1e-10);
        assert_eq!(sol.v1[0][0], 0.0);
    }

    #[test]
    fn feedback_rejects_out_of_range_time() {
        let sol = solve_sre(&merton(), &Cone::full(1), &SreOptions::with_steps(10)).unwrap();
        assert!(matches!(sol.feedback(1.5, 1.0), Err(Error::Argument(_))));
        assert!(matches!(sol.feedback(-0.1, 1.0), Err(Error::Argument(_))));
        let u = sol.feedback(0.0, -2.0).unwrap();
        assert_relative_eq!(u[0], sol.v2[0][0] * 2.0);
    }

    #[test]
    fn unclassified_coefficients_are_rejected() {
        let k = LqCoefficients::scalar(1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, &[]);
        assert!(matches!(
            solve_sre(&k, &Cone::full(1), &SreOptions::with_steps(10)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn truncation_increases_value() {
        let k = LqCoefficients::scalar(1.0, 0.1, 0.5, 0.2, 0.4, 1.0, 0.5, 0.1, 1.0, &[(-0.3, 0.6, 1.0)]);
        let opts = SreOptions::with_steps(100);
        let full = solve_sre(&k, &Cone::orthant(1), &opts).unwrap();
        let t = solve_truncated(&k, &Cone::orthant(1), 0.05, &opts).unwrap();
        assert!(t.p1[0] >= full.p1[0] - 1e-12);
        assert!(t.p2[0] >= full.p2[0] - 1e-12);
        assert!(t.v1.iter().all(|v| v.norm() <= 0.05 + 1e-12));
    }

    fn jump_instance() -> LqCoefficients {
        LqCoefficients::scalar(1.0, 0.1, 0.5, 0.2, 0.4, 1.0, 0.5, 0.1, 1.0, &[(-0.3, 0.6, 1.0)])
    }

    #[test]
    fn symmetric_cone_gives_equal_components() {
        let sol = solve_sre(&jump_instance(), &Cone::full(1), &SreOptions::with_steps(200)).unwrap();
        for (a, b) in sol.p1.iter().zip(&sol.p2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let asym = solve_sre(&jump_instance(), &Cone::orthant(1), &SreOptions::with_steps(200)).unwrap();
        assert!((asym.p1[0] - asym.p2[0]).abs() > 1e-3);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let exact = (2.0 * 0.03 - (0.2f64 / 0.3).powi(2)).exp();
        let err = |n| {
            let mut k = merton();
            // A time-varying rate keeps the error from vanishing to rounding.
            k.a = vec![0.01, 0.05];
            k.b = vec![k.b[0].clone(); 2];
            k.c = vec![k.c[0].clone(); 2];
            k.d = vec![k.d[0].clone(); 2];
            k.q = vec![0.0; 2];
            k.r = vec![k.r[0].clone(); 2];
            k.s = vec![k.s[0].clone(); 2];
            let sol = solve_sre(&k, &Cone::full(1), &SreOptions::with_steps(n)).unwrap();
            (sol.p1[0] - exact).abs()
        };
        // Piecewise-constant coefficients on a commensurate grid are
        // integrated exactly up to the RK4 truncation of an exponential.
        let (e1, e2) = (err(4), err(8));
        assert!(e2 < e1 / 12.0, "{e1} {e2}");
    }

    #[test]
    fn schemes_agree_on_a_jump_instance() {
        let k = jump_instance();
        let rk = solve_sre(&k, &Cone::orthant(1), &SreOptions::with_steps(400)).unwrap();
        let mut opts = SreOptions::with_steps(4000);
        opts.scheme = Scheme::ImplicitEuler;
        let ie = solve_sre(&k, &Cone::orthant(1), &opts).unwrap();
        assert_relative_eq!(rk.p1[0], ie.p1[0], max_relative = 1e-3);
        assert_relative_eq!(rk.p2[0], ie.p2[0], max_relative = 1e-3);
    }

    #[test]
    fn truncated_solutions_decrease_in_radius() {
        let k = jump_instance();
        let opts = SreOptions::with_steps(100);
        let sols: Vec<_> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&r| solve_truncated(&k, &Cone::full(1), r, &opts).unwrap())
            .collect();
        for w in sols.windows(2) {
            for i in 0..=100 {
                assert!(w[1].p1[i] <= w[0].p1[i] + 1e-9);
                assert!(w[1].p2[i] <= w[0].p2[i] + 1e-9);
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]
        #[test]
        fn standard_case_stays_within_bounds(
            a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0,
            q in 0.0f64..2.0, r in 0.2f64..2.0, g in 0.0f64..2.0,
            e in -0.9f64..1.0, f in -1.0f64..1.0, nu in 0.0f64..2.0, orthant in proptest::bool::ANY,
        ) {
            let k = LqCoefficients::scalar(1.0, a, b, c, d, q, r, 0.0, g, &[(e, f, nu)]);
            let cone = if orthant { Cone::orthant(1) } else { Cone::full(1) };
            let sol = solve_sre(&k, &cone, &SreOptions::with_steps(100)).unwrap();
            proptest::prop_assert!(sol.bounds.max_violation() <= 1e-7);
            if cone.is_symmetric() {
                proptest::prop_assert!((sol.p1[0] - sol.p2[0]).abs() <= 1e-10 * sol.p1[0].max(1.0));
            }
        }
    }
}
