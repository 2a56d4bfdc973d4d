use nalgebra::{DMatrix, DVector};

use crate::conekit::{HInput, HMark};
use crate::error::{Error, Result};
use crate::linalg;

/// A jump mark with time-dependent sizes `E(t)`, `F(t)` and weight `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqMark {
    pub e: Vec<f64>,
    pub f: Vec<DVector<f64>>,
    pub nu: f64,
}

/// Deterministic coefficients of the scalar controlled jump SDE and its
/// quadratic cost, piecewise constant on a uniform grid of `K` intervals
/// over `[0, T]`. Every per-interval vector has length `K`.
///
/// Shapes: `b`, `s` and mark `f` are `m`-vectors, `c` is an `n`-vector,
/// `d` is `n × m` and `r` is `m × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqCoefficients {
    pub horizon: f64,
    pub a: Vec<f64>,
    pub b: Vec<DVector<f64>>,
    pub c: Vec<DVector<f64>>,
    pub d: Vec<DMatrix<f64>>,
    pub q: Vec<f64>,
    pub r: Vec<DMatrix<f64>>,
    pub s: Vec<DVector<f64>>,
    pub g: f64,
    pub marks: Vec<LqMark>,
}

/// Which existence regime the coefficients fall under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverCase {
    /// `R ≥ δI` and the weight block is PSD.
    Standard,
    /// Weight block PSD, `G ≥ δ` and `DᵀD + Σ ν F Fᵀ ≥ δI`.
    Singular,
}

impl LqCoefficients {
    /// Time-constant coefficients on a single interval.
    #[allow(clippy::too_many_arguments)]
    pub fn constant(
        horizon: f64,
        a: f64,
        b: DVector<f64>,
        c: DVector<f64>,
        d: DMatrix<f64>,
        q: f64,
        r: DMatrix<f64>,
        s: DVector<f64>,
        g: f64,
        marks: Vec<(f64, DVector<f64>, f64)>,
    ) -> Self {
        LqCoefficients {
            horizon,
            a: vec![a],
            b: vec![b],
            c: vec![c],
            d: vec![d],
            q: vec![q],
            r: vec![r],
            s: vec![s],
            g,
            marks: marks
                .into_iter()
                .map(|(e, f, nu)| LqMark {
                    e: vec![e],
                    f: vec![f],
                    nu,
                })
                .collect(),
        }
    }

    /// Scalar state, scalar control, one noise; handy for tests and examples.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        horizon: f64,
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        q: f64,
        r: f64,
        s: f64,
        g: f64,
        marks: &[(f64, f64, f64)],
    ) -> Self {
        LqCoefficients::constant(
            horizon,
            a,
            DVector::from_element(1, b),
            DVector::from_element(1, c),
            DMatrix::from_element(1, 1, d),
            q,
            DMatrix::from_element(1, 1, r),
            DVector::from_element(1, s),
            g,
            marks
                .iter()
                .map(|&(e, f, nu)| (e, DVector::from_element(1, f), nu))
                .collect(),
        )
    }

    pub fn intervals(&self) -> usize {
        self.a.len()
    }

    pub fn control_dim(&self) -> usize {
        self.b.first().map_or(0, |b| b.len())
    }

    pub fn noise_dim(&self) -> usize {
        self.c.first().map_or(0, |c| c.len())
    }

    /// Grid interval holding `t`; right-continuous, with `T` mapped to the last one.
    pub fn interval_at(&self, t: f64) -> usize {
        let k = self.intervals();
        let idx = (t / self.horizon * k as f64).floor();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(k - 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Argument(format!("horizon {} must be positive", self.horizon)));
        }
        let k = self.intervals();
        if k == 0 {
            return Err(Error::Argument("coefficient grid is empty".into()));
        }
        let m = self.control_dim();
        let n = self.noise_dim();
        if m == 0 {
            return Err(Error::Argument("control dimension must be positive".into()));
        }
        let lens = [
            self.b.len(),
            self.c.len(),
            self.d.len(),
            self.q.len(),
            self.r.len(),
            self.s.len(),
        ];
        for len in lens {
            if len != k {
                return Err(Error::Dimension { expected: k, got: len });
            }
        }
        for mk in &self.marks {
            if mk.e.len() != k || mk.f.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    got: mk.e.len().min(mk.f.len()),
                });
            }
            if !(mk.nu >= 0.0) || !mk.nu.is_finite() {
                return Err(Error::Argument(format!("mark weight {} must be >= 0", mk.nu)));
            }
        }
        for i in 0..k {
            let shape_ok = self.b[i].len() == m
                && self.s[i].len() == m
                && self.c[i].len() == n
                && self.d[i].shape() == (n, m)
                && self.r[i].shape() == (m, m)
                && self.marks.iter().all(|mk| mk.f[i].len() == m);
            if !shape_ok {
                return Err(Error::Argument(format!("inconsistent shapes on interval {i}")));
            }
            let finite = self.a[i].is_finite()
                && self.q[i].is_finite()
                && self.b[i].iter().all(|x| x.is_finite())
                && self.c[i].iter().all(|x| x.is_finite())
                && self.d[i].iter().all(|x| x.is_finite())
                && self.r[i].iter().all(|x| x.is_finite())
                && self.s[i].iter().all(|x| x.is_finite())
                && self
                    .marks
                    .iter()
                    .all(|mk| mk.e[i].is_finite() && mk.f[i].iter().all(|x| x.is_finite()));
            if !finite {
                return Err(Error::Argument(format!("non-finite coefficient on interval {i}")));
            }
            if self.q[i] < 0.0 {
                return Err(Error::Argument(format!("Q must be nonnegative, got {}", self.q[i])));
            }
            if (&self.r[i] - self.r[i].transpose()).abs().max() > 1e-12 * self.r[i].abs().max().max(1.0) {
                return Err(Error::Argument("R must be symmetric".into()));
            }
        }
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return Err(Error::Argument(format!("G must be nonnegative, got {}", self.g)));
        }
        Ok(())
    }

    fn weight_block_psd(&self) -> bool {
        (0..self.intervals())
            .all(|i| linalg::is_psd(&linalg::weight_block(&self.r[i], &self.s[i], self.q[i])))
    }

    /// `DᵀD + Σ ν F Fᵀ` on interval `i`.
    pub fn jump_diffusion_gram(&self, i: usize) -> DMatrix<f64> {
        let mut gram = self.d[i].transpose() * &self.d[i];
        for mk in &self.marks {
            gram += &mk.f[i] * mk.f[i].transpose() * mk.nu;
        }
        gram
    }

    /// `δ` of the standard case if it applies.
    pub fn standard_delta(&self) -> Option<f64> {
        if !self.weight_block_psd() {
            return None;
        }
        let delta = self
            .r
            .iter()
            .map(linalg::min_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        (delta > 1e-12).then_some(delta)
    }

    /// `δ` of the singular case if it applies.
    pub fn singular_delta(&self) -> Option<f64> {
        if !self.weight_block_psd() {
            return None;
        }
        let gram = (0..self.intervals())
            .map(|i| linalg::min_eigenvalue(&self.jump_diffusion_gram(i)))
            .fold(f64::INFINITY, f64::min);
        let delta = gram.min(self.g);
        (delta > 1e-12).then_some(delta)
    }

    pub fn case(&self) -> Option<SolverCase> {
        if self.standard_delta().is_some() {
            Some(SolverCase::Standard)
        } else if self.singular_delta().is_some() {
            Some(SolverCase::Singular)
        } else {
            None
        }
    }

    /// `2A + CᵀC` on interval `i`.
    pub fn state_rate(&self, i: usize) -> f64 {
        2.0 * self.a[i] + self.c[i].norm_squared()
    }

    /// Generator input on interval `i` with zero martingale parts.
    pub fn h_input(&self, i: usize, p1: f64, p2: f64) -> HInput {
        HInput::new(
            self.r[i].clone(),
            self.d[i].clone(),
            self.b[i].clone(),
            self.c[i].clone(),
            self.s[i].clone(),
            self.marks
                .iter()
                .map(|mk| HMark {
                    e: mk.e[i],
                    f: mk.f[i].clone(),
                    nu: mk.nu,
                })
                .collect(),
            p1,
            p2,
        )
    }

    /// Smallest `c` with `2A + CᵀC + Σ ν E² ≤ c`, `Q ≤ c` and `G ≤ c` on the grid.
    pub fn upper_bound_rate(&self) -> f64 {
        let mut c = self.g.max(0.0);
        for i in 0..self.intervals() {
            let jump: f64 = self.marks.iter().map(|mk| mk.nu * mk.e[i] * mk.e[i]).sum();
            c = c.max(self.state_rate(i) + jump).max(self.q[i]);
        }
        c
    }

    /// `M = (c+1)e^{cT} - 1`.
    pub fn upper_bound(&self) -> f64 {
        let c = self.upper_bound_rate();
        (c + 1.0) * (c * self.horizon).exp() - 1.0
    }

    /// `(δ, c₂)` for the singular-case lower bound `δ e^{-c₂(T-t)}`.
    pub fn lower_bound_constants(&self) -> Option<(f64, f64)> {
        let delta = self.singular_delta()?;
        let mut c2 = 0.0f64;
        for i in 0..self.intervals() {
            let jump_e2: f64 = self.marks.iter().map(|mk| mk.nu * mk.e[i] * mk.e[i]).sum();
            let mut ef = DVector::zeros(self.control_dim());
            for mk in &self.marks {
                ef += &mk.f[i] * (mk.nu * mk.e[i]);
            }
            let base = &self.b[i] + self.d[i].transpose() * &self.c[i];
            for sign in [1.0, -1.0] {
                let v = &base + &ef * sign;
                let rate = self.state_rate(i) + jump_e2 - v.norm_squared() / delta;
                c2 = c2.max(-rate);
            }
        }
        Some((delta, c2))
    }
}
