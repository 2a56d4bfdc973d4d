use nalgebra::DVector;

use super::cone::Cone;
use super::objective::{HInput, PiecewiseQuadratic, Which};
use crate::error::{Error, Result};

/// Accelerated projected gradient for the generator maps.
///
/// Starts from the origin, uses the global gradient Lipschitz bound as the
/// initial step and doubles it whenever the sufficient-decrease test fails.
/// Momentum is reset whenever the objective increases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimizer {
    /// Bound on the projected-gradient residual `|v - Proj(v - ∇f(v)/L)|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Minimizer {
    fn default() -> Self {
        Minimizer {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// A minimiser with its objective value and the step constant used in the
/// stationarity test.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub v_hat: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub lipschitz: f64,
    pub residual: f64,
}

/// Iterates beyond this norm are treated as evidence of an unbounded objective.
const DIVERGENCE_NORM: f64 = 1e12;
const MIN_LIPSCHITZ: f64 = 1e-8;

impl Minimizer {
    pub fn new(tol: f64) -> Self {
        Minimizer {
            tol,
            ..Default::default()
        }
    }

    /// `inf` of `H₁` or `H₂` over `Π`, or over `Π ∩ {|v| ≤ radius}`.
    pub fn minimize(
        &self,
        input: &HInput,
        which: Which,
        cone: &Cone,
        radius: Option<f64>,
    ) -> Result<MinimizeResult> {
        input.validate()?;
        if cone.dim() != input.control_dim() {
            return Err(Error::Dimension {
                expected: input.control_dim(),
                got: cone.dim(),
            });
        }
        let obj = input.objective(which);
        self.minimize_objective(&obj, cone, radius)
    }

    pub fn minimize_objective(
        &self,
        obj: &PiecewiseQuadratic,
        cone: &Cone,
        radius: Option<f64>,
    ) -> Result<MinimizeResult> {
        if let Some(k) = radius {
            if !(k >= 0.0) {
                return Err(Error::Argument(format!("radius {k} must be >= 0")));
            }
        }
        if !obj.is_convex() {
            return Err(Error::Invariant("objective is not convex".into()));
        }
        match cone {
            Cone::Union { members } if !cone.is_convex() => {
                let mut best: Option<MinimizeResult> = None;
                for c in members {
                    let r = self.minimize_objective(obj, c, radius)?;
                    if best.as_ref().is_none_or(|b| r.value < b.value) {
                        best = Some(r);
                    }
                }
                Ok(best.expect("union has at least one member"))
            }
            _ => self.run(obj, cone, radius),
        }
    }

    fn run(&self, obj: &PiecewiseQuadratic, cone: &Cone, radius: Option<f64>) -> Result<MinimizeResult> {
        let m = obj.dim();
        let project = |x: &[f64], out: &mut [f64]| match radius {
            Some(k) => cone.project_ball_into(x, k, out),
            None => cone.project_into(x, out),
        };
        let mut lip = obj.lipschitz_bound().max(MIN_LIPSCHITZ);

        let mut x = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut x_new = vec![0.0; m];
        let mut grad = vec![0.0; m];
        let mut trial = vec![0.0; m];
        let mut t = 1.0f64;
        let mut fx = obj.value(&x);
        if !fx.is_finite() {
            return Err(Error::Numeric(format!("objective not finite at origin: {fx}")));
        }

        for iter in 0..=self.max_iter {
            // Stationarity at the current iterate.
            obj.gradient(&x, &mut grad);
            for i in 0..m {
                trial[i] = x[i] - grad[i] / lip;
            }
            project(&trial, &mut x_new);
            let residual = dist(&x, &x_new);
            let scale = 1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if residual <= self.tol * scale {
                return Ok(MinimizeResult {
                    v_hat: DVector::from_vec(x),
                    value: fx,
                    iterations: iter,
                    lipschitz: lip,
                    residual,
                });
            }
            if iter == self.max_iter {
                return Err(Error::Convergence {
                    iterations: iter,
                    residual,
                });
            }

            // Proximal step from the extrapolated point with backtracking.
            obj.gradient(&y, &mut grad);
            let fy = obj.value(&y);
            let mut f_new;
            loop {
                for i in 0..m {
                    trial[i] = y[i] - grad[i] / lip;
                }
                project(&trial, &mut x_new);
                f_new = obj.value(&x_new);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for i in 0..m {
                    let d = x_new[i] - y[i];
                    lin += grad[i] * d;
                    sq += d * d;
                }
                let model = fy + lin + 0.5 * lip * sq;
                if f_new <= model + 1e-14 * (1.0 + model.abs()) || !f_new.is_finite() {
                    break;
                }
                lip *= 2.0;
            }
            if !f_new.is_finite() {
                return Err(Error::Numeric(format!("objective not finite: {f_new}")));
            }

            if f_new > fx && t > 1.0 {
                // Restart from the last accepted point without momentum. A plain
                // projected step (t = 1) is always accepted so rounding cannot stall.
                t = 1.0;
                y.copy_from_slice(&x);
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for i in 0..m {
                y[i] = x_new[i] + beta * (x_new[i] - x[i]);
            }
            std::mem::swap(&mut x, &mut x_new);
            fx = f_new;
            t = t_next;

            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > DIVERGENCE_NORM {
                return Err(Error::Numeric(format!(
                    "iterates diverge (|v| = {norm:e}); objective is unbounded below on the cone"
                )));
            }
        }
        unreachable!("loop returns on the final iteration")
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Global minimum of the scalar map on `[lo, hi]`, found by enumerating the
/// endpoints, every kink of the jump terms and the vertex of each quadratic
/// piece. Values come from the term-by-term evaluation, so this shares no
/// code path with [`Minimizer`].
pub fn exact_minimize_1d(input: &HInput, which: Which, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if input.control_dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: input.control_dim(),
        });
    }
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Argument(format!("empty or unbounded interval [{lo}, {hi}]")));
    }
    let f = |x: f64| input.eval(which, &DVector::from_element(1, x));

    let mut knots: Vec<f64> = input
        .breakpoints_1d(which)
        .into_iter()
        .filter(|b| *b > lo && *b < hi)
        .collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
    knots.dedup();

    let mut candidates = knots.clone();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Exact parabola through three interior points of the piece.
        let (x0, x1, x2) = (a + 0.25 * (b - a), a + 0.5 * (b - a), a + 0.75 * (b - a));
        let (f0, f1, f2) = (f(x0), f(x1), f(x2));
        let h = 0.25 * (b - a);
        let curv = (f2 - 2.0 * f1 + f0) / (h * h);
        if curv > 0.0 {
            let slope = (f2 - f0) / (2.0 * h);
            let vertex = x1 - slope / curv;
            if vertex > a && vertex < b {
                candidates.push(vertex);
            }
        }
    }
    let mut best = (lo, f(lo));
    for x in candidates {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conekit::objective::HMark;
    use nalgebra::DMatrix;

    fn parabola() -> HInput {
        // f(v) = v² + 2v
        HInput::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::from_element(1, 1.0),
            vec![],
            0.0,
            0.0,
        )
    }

    fn one_mark() -> HInput {
        HInput::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::zeros(1),
            vec![HMark {
                e: 0.0,
                f: DVector::from_element(1, 1.0),
                nu: 1.0,
            }],
            1.0,
            2.0,
        )
    }

    #[test]
    fn parabola_vertex() {
        let r = Minimizer::default()
            .minimize(&parabola(), Which::H1, &Cone::full(1), None)
            .unwrap();
        assert!((r.v_hat[0] + 1.0).abs() < 1e-9);
        assert!((r.value + 1.0).abs() < 1e-15);
    }

    #[test]
    fn parabola_constrained() {
        let r = Minimizer::default()
            .minimize(&parabola(), Which::H1, &Cone::orthant(1), None)
            .unwrap();
        assert_eq!(r.v_hat[0], 0.0);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn one_mark_minimum_at_origin() {
        let r = Minimizer::default()
            .minimize(&one_mark(), Which::H1, &Cone::full(1), None)
            .unwrap();
        assert!(r.v_hat[0].abs() < 1e-10);
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn exact_1d_examples() {
        let (v, f) = exact_minimize_1d(&one_mark(), Which::H1, -10.0, 10.0).unwrap();
        assert!(v.abs() < 1e-12 && f.abs() < 1e-12);
        let (v, f) = exact_minimize_1d(&parabola(), Which::H1, -10.0, 10.0).unwrap();
        assert!((v + 1.0).abs() < 1e-12 && (f + 1.0).abs() < 1e-12);
        let (v, f) = exact_minimize_1d(&parabola(), Which::H1, 0.0, 10.0).unwrap();
        assert_eq!((v, f), (0.0, 0.0));
        assert!(matches!(
            exact_minimize_1d(&parabola(), Which::H1, 1.0, 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn breakpoint_enumeration_oracle() {
        // On v ≥ -1 the map is v², on v ≤ -1 it is 2v² + 2v + 1.
        let h = one_mark();
        for &x in &[-3.0, -1.5, -1.0, -0.5, 0.0, 0.7, 2.0] {
            let expected = if x >= -1.0 { x * x } else { 2.0 * x * x + 2.0 * x + 1.0 };
            let got = h.eval_h1(&DVector::from_element(1, x));
            assert!((got - expected).abs() < 1e-12, "x={x}: {got} vs {expected}");
        }
    }

    #[test]
    fn unbounded_objective_is_reported() {
        // 2v over the full line.
        let mut h = HInput::zeros(1, 1);
        h.s[0] = 1.0;
        let err = Minimizer::default()
            .minimize(&h, Which::H1, &Cone::full(1), None)
            .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err:?}");
        // Bounded once a radius is imposed.
        let r = Minimizer::default()
            .minimize(&h, Which::H1, &Cone::full(1), Some(3.0))
            .unwrap();
        assert!((r.v_hat[0] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_input_is_rejected() {
        let mut h = one_mark();
        h.gamma2[0] = -5.0;
        assert!(matches!(
            Minimizer::default().minimize(&h, Which::H1, &Cone::full(1), None),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn truncation_is_monotone_in_radius() {
        let mut h = parabola();
        h.s[0] = 5.0; // vertex at -5
        let mut last = f64::INFINITY;
        for k in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let r = Minimizer::default()
                .minimize(&h, Which::H1, &Cone::full(1), Some(k))
                .unwrap();
            assert!(r.value <= last);
            last = r.value;
        }
    }

    #[test]
    fn union_takes_best_member() {
        let mut h = parabola();
        h.r = DMatrix::identity(2, 2);
        h.d = DMatrix::zeros(1, 2);
        h.b = DVector::zeros(2);
        h.s = DVector::from_column_slice(&[1.0, -2.0]); // vertex (-1, 2)
        let u = Cone::union(vec![Cone::ray(vec![-1.0, 0.0]), Cone::ray(vec![0.0, 1.0])]).unwrap();
        let r = Minimizer::default().minimize(&h, Which::H1, &u, None).unwrap();
        assert!((r.v_hat[0]).abs() < 1e-9 && (r.v_hat[1] - 2.0).abs() < 1e-9);
        assert!((r.value + 4.0).abs() < 1e-12);
    }
}
