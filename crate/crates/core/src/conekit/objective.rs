use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// One atom of the discretised jump measure as seen by the generators.
#[derive(Debug, Clone, PartialEq)]
pub struct HMark {
    pub e: f64,
    pub f: DVector<f64>,
    pub nu: f64,
}

/// Which of the two coupled generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Which {
    H1,
    H2,
}

/// Arguments of the generator maps at a single time point.
///
/// `lambda` and the per-mark `gamma1`/`gamma2` are the martingale parts of
/// the Riccati solution; they vanish for deterministic coefficients but the
/// maps are defined for arbitrary values.
#[derive(Debug, Clone, PartialEq)]
pub struct HInput {
    pub p1: f64,
    pub p2: f64,
    pub lambda: DVector<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub r: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub s: DVector<f64>,
    pub marks: Vec<HMark>,
}

impl HInput {
    /// Input with zero martingale parts. `d` is `n × m`.
    pub fn new(
        r: DMatrix<f64>,
        d: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        s: DVector<f64>,
        marks: Vec<HMark>,
        p1: f64,
        p2: f64,
    ) -> Self {
        let n = d.nrows();
        let j = marks.len();
        HInput {
            p1,
            p2,
            lambda: DVector::zeros(n),
            gamma1: vec![0.0; j],
            gamma2: vec![0.0; j],
            r,
            d,
            b,
            c,
            s,
            marks,
        }
    }

    /// All-zero coefficients in dimensions `m` (control) and `n` (noise).
    pub fn zeros(m: usize, n: usize) -> Self {
        HInput::new(
            DMatrix::zeros(m, m),
            DMatrix::zeros(n, m),
            DVector::zeros(m),
            DVector::zeros(n),
            DVector::zeros(m),
            Vec::new(),
            0.0,
            0.0,
        )
    }

    pub fn control_dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.d.nrows()
    }

    /// Swap the roles of the two components: `(P₁,Γ₁) ↔ (P₂,Γ₂)`.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        std::mem::swap(&mut out.p1, &mut out.p2);
        std::mem::swap(&mut out.gamma1, &mut out.gamma2);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.control_dim();
        let n = self.noise_dim();
        let dims = [
            (self.r.ncols(), m),
            (self.d.ncols(), m),
            (self.b.len(), m),
            (self.s.len(), m),
            (self.c.len(), n),
            (self.lambda.len(), n),
            (self.gamma1.len(), self.marks.len()),
            (self.gamma2.len(), self.marks.len()),
        ];
        for (got, expected) in dims {
            if got != expected {
                return Err(Error::Dimension { expected, got });
            }
        }
        for mk in &self.marks {
            if mk.f.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    got: mk.f.len(),
                });
            }
            if !(mk.nu >= 0.0) || !mk.nu.is_finite() || !mk.e.is_finite() {
                return Err(Error::Invariant(format!(
                    "mark weight must be finite and nonnegative, got nu={} e={}",
                    mk.nu, mk.e
                )));
            }
        }
        if !(self.p1 >= 0.0 && self.p2 >= 0.0) {
            return Err(Error::Invariant(format!(
                "P1={} and P2={} must be nonnegative",
                self.p1, self.p2
            )));
        }
        for (j, (g1, g2)) in self.gamma1.iter().zip(&self.gamma2).enumerate() {
            if self.p1 + g1 < 0.0 || self.p2 + g2 < 0.0 {
                return Err(Error::Invariant(format!(
                    "P+Gamma negative at mark {j}: {} / {}",
                    self.p1 + g1,
                    self.p2 + g2
                )));
            }
        }
        if !linalg::is_psd(&self.r) {
            return Err(Error::Invariant("R is not positive semidefinite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, which: Which, v: &DVector<f64>) -> f64 {
        match which {
            Which::H1 => self.eval_h1(v),
            Which::H2 => self.eval_h2(v),
        }
    }

    /// First generator map, term by term.
    pub fn eval_h1(&self, v: &DVector<f64>) -> f64 {
        let dtd = self.d.transpose() * &self.d;
        let quad = v.dot(&((&self.r + &dtd * self.p1) * v));
        let lin = (&self.b + self.d.transpose() * &self.c) * self.p1
            + self.d.transpose() * &self.lambda
            + &self.s;
        let mut total = quad + 2.0 * lin.dot(v);
        for (j, mk) in self.marks.iter().enumerate() {
            let fv = mk.f.dot(v);
            let arg = 1.0 + mk.e + fv;
            let pos = arg.max(0.0);
            let neg = (-arg).max(0.0);
            total += mk.nu
                * ((self.p1 + self.gamma1[j]) * (pos * pos - 1.0) - 2.0 * self.p1 * (mk.e + fv)
                    + (self.p2 + self.gamma2[j]) * neg * neg);
        }
        total
    }

    /// Second generator map, term by term.
    pub fn eval_h2(&self, v: &DVector<f64>) -> f64 {
        let dtd = self.d.transpose() * &self.d;
        let quad = v.dot(&((&self.r + &dtd * self.p2) * v));
        let lin = (&self.b + self.d.transpose() * &self.c) * self.p2
            + self.d.transpose() * &self.lambda
            + &self.s;
        let mut total = quad - 2.0 * lin.dot(v);
        for (j, mk) in self.marks.iter().enumerate() {
            let fv = mk.f.dot(v);
            let arg = -1.0 - mk.e + fv;
            let pos = arg.max(0.0);
            let neg = (-arg).max(0.0);
            total += mk.nu
                * ((self.p2 + self.gamma2[j]) * (neg * neg - 1.0)
                    + 2.0 * self.p2 * (-mk.e + fv)
                    + (self.p1 + self.gamma1[j]) * pos * pos);
        }
        total
    }

    /// Breakpoints in `v` (for `m = 1`) where a jump argument changes sign.
    pub(crate) fn breakpoints_1d(&self, which: Which) -> Vec<f64> {
        self.marks
            .iter()
            .filter(|mk| mk.f[0] != 0.0)
            .map(|mk| match which {
                Which::H1 => -(1.0 + mk.e) / mk.f[0],
                Which::H2 => (1.0 + mk.e) / mk.f[0],
            })
            .collect()
    }

    /// The chosen map in the canonical piecewise-quadratic form.
    pub fn objective(&self, which: Which) -> PiecewiseQuadratic {
        let dtd = self.d.transpose() * &self.d;
        let dc = self.d.transpose() * &self.c;
        let dl = self.d.transpose() * &self.lambda;
        let (p_own, sign, offset_sign) = match which {
            Which::H1 => (self.p1, 1.0, 1.0),
            Which::H2 => (self.p2, -1.0, -1.0),
        };
        let quad = &self.r + dtd * p_own;
        let lin = ((&self.b + dc) * p_own + dl + &self.s) * sign;
        let mut constant = 0.0;
        let mut pieces = Vec::with_capacity(self.marks.len());
        for (j, mk) in self.marks.iter().enumerate() {
            let w1 = mk.nu * (self.p1 + self.gamma1[j]);
            let w2 = mk.nu * (self.p2 + self.gamma2[j]);
            // H1: s = 1+E+Fᵀv, linear part -2νP₁(s-1).
            // H2: s = -1-E+Fᵀv, linear part 2νP₂(s+1).
            let (slope, own_w) = match which {
                Which::H1 => (-2.0 * mk.nu * self.p1, w1),
                Which::H2 => (2.0 * mk.nu * self.p2, w2),
            };
            constant += -own_w + 2.0 * mk.nu * p_own;
            pieces.push(Piece {
                offset: offset_sign * (1.0 + mk.e),
                dir: mk.f.iter().copied().collect(),
                w_pos: w1,
                w_neg: w2,
                slope,
            });
        }
        PiecewiseQuadratic {
            quad,
            lin,
            constant,
            pieces,
        }
    }
}

/// `w⁺(s⁺)² + w⁻(s⁻)² + slope·s` with `s = offset + dirᵀv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub offset: f64,
    pub dir: Vec<f64>,
    pub w_pos: f64,
    pub w_neg: f64,
    pub slope: f64,
}

/// `f(v) = vᵀQv + 2qᵀv + k + Σ pieces`. Convex when `Q ⪰ 0` and all piece
/// weights are nonnegative; the gradient is continuous and piecewise linear.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseQuadratic {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub constant: f64,
    pub pieces: Vec<Piece>,
}

impl PiecewiseQuadratic {
    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        let m = self.dim();
        let mut total = self.constant;
        for i in 0..m {
            let mut row = 0.0;
            for k in 0..m {
                row += self.quad[(i, k)] * v[k];
            }
            total += v[i] * (row + 2.0 * self.lin[i]);
        }
        for p in &self.pieces {
            let s = p.offset + dot(&p.dir, v);
            let pos = s.max(0.0);
            let neg = (-s).max(0.0);
            total += p.w_pos * pos * pos + p.w_neg * neg * neg + p.slope * s;
        }
        total
    }

    pub fn gradient(&self, v: &[f64], out: &mut [f64]) {
        let m = self.dim();
        for i in 0..m {
            let mut row = 0.0;
            for k in 0..m {
                row += (self.quad[(i, k)] + self.quad[(k, i)]) * v[k];
            }
            out[i] = row + 2.0 * self.lin[i];
        }
        for p in &self.pieces {
            let s = p.offset + dot(&p.dir, v);
            let coef = 2.0 * p.w_pos * s.max(0.0) - 2.0 * p.w_neg * (-s).max(0.0) + p.slope;
            for (o, d) in out.iter_mut().zip(&p.dir) {
                *o += coef * d;
            }
        }
    }

    /// Global Lipschitz bound on the gradient.
    pub fn lipschitz_bound(&self) -> f64 {
        let sym = (&self.quad + self.quad.transpose()) * 0.5;
        let mut l = 2.0 * linalg::max_eigenvalue(&sym).max(0.0);
        for p in &self.pieces {
            let dd: f64 = p.dir.iter().map(|d| d * d).sum();
            l += 2.0 * p.w_pos.max(p.w_neg) * dd;
        }
        l
    }

    pub fn is_convex(&self) -> bool {
        self.pieces.iter().all(|p| p.w_pos >= 0.0 && p.w_neg >= 0.0)
            && linalg::is_psd(&((&self.quad + self.quad.transpose()) * 0.5))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
