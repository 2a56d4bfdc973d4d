//! `[(x+y)⁺]² - (x⁺)² - 2(1+c)x⁺y + (c²∨1)(x⁺)² ≥ 0` for `c ≥ -1`.
//!
//! The slack cancels catastrophically in floating point near its zero set
//! (e.g. `c = 1, y = x`), so the sweep evaluates it exactly on a dyadic grid
//! with integer arithmetic. [`slack`] is the plain `f64` formula.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Grid spacing `2^-FRAC_BITS` for the exact evaluation.
pub const FRAC_BITS: u32 = 20;
pub const XY_RANGE: f64 = 1e3;
pub const C_RANGE: (f64, f64) = (-1.0, 15.0);

pub fn slack(x: f64, y: f64, c: f64) -> f64 {
    let xp = x.max(0.0);
    let s = (x + y).max(0.0);
    s * s - xp * xp - 2.0 * (1.0 + c) * xp * y + (c * c).max(1.0) * xp * xp
}

/// Slack at `(X, Y, C)·2^-FRAC_BITS`, exact, scaled by `2^(4·FRAC_BITS)`.
pub fn slack_exact(x: i64, y: i64, c: i64) -> i128 {
    let one = 1i128 << FRAC_BITS;
    let (x, y, c) = (x as i128, y as i128, c as i128);
    let xp = x.max(0);
    let s = (x + y).max(0);
    // Every term carries 2^(4·FRAC_BITS).
    let s2 = s * s * one * one;
    let x2 = xp * xp * one * one;
    let cross = 2 * (one + c) * xp * y * one;
    let cc = (c * c).max(one * one) * xp * xp;
    s2 - x2 - cross + cc
}

fn to_fixed(v: f64) -> i64 {
    (v * (1u64 << FRAC_BITS) as f64).round() as i64
}

fn from_fixed4(v: i128) -> f64 {
    v as f64 / 2f64.powi(4 * FRAC_BITS as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub evaluated: usize,
    pub violations: usize,
    pub min_slack: f64,
    /// Triple attaining `min_slack`.
    pub argmin: (f64, f64, f64),
    pub tol: f64,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Deterministic grid (`grid_side³` points, zero set included) plus `samples`
/// uniform triples with `x, y ∈ [-10³, 10³]`, `c ∈ [-1, 15]`.
pub fn check_elementary_inequality(samples: usize, seed: u64, grid_side: usize) -> Result<InequalityReport> {
    if grid_side == 1 {
        return Err(Error::Argument("grid needs at least two points per axis".into()));
    }
    let tol = 1e-12;
    let mut report = InequalityReport {
        evaluated: 0,
        violations: 0,
        min_slack: f64::INFINITY,
        argmin: (0.0, 0.0, 0.0),
        tol,
    };
    let mut visit = |x: i64, y: i64, c: i64| {
        let s = from_fixed4(slack_exact(x, y, c));
        report.evaluated += 1;
        if s < -tol {
            report.violations += 1;
        }
        if s < report.min_slack {
            report.min_slack = s;
            let scale = (1u64 << FRAC_BITS) as f64;
            report.argmin = (x as f64 / scale, y as f64 / scale, c as f64 / scale);
        }
    };

    if grid_side > 0 {
        let axis = |lo: f64, hi: f64| -> Vec<i64> {
            (0..grid_side)
                .map(|k| to_fixed(lo + (hi - lo) * k as f64 / (grid_side - 1) as f64))
                .collect()
        };
        let xs = axis(-XY_RANGE, XY_RANGE);
        let cs = axis(C_RANGE.0, C_RANGE.1);
        for &x in &xs {
            for &c in &cs {
                for &y in &xs {
                    visit(x, y, c);
                }
                // Tight points: y = x (c = 1) and y = -x (c = -1) and y = c·x.
                visit(x, x, c);
                visit(x, -x, c);
                let cx = (x as i128 * c as i128) >> FRAC_BITS;
                if cx.abs() <= to_fixed(XY_RANGE) as i128 {
                    visit(x, cx as i64, c);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = to_fixed(rng.random_range(-XY_RANGE..=XY_RANGE));
        let y = to_fixed(rng.random_range(-XY_RANGE..=XY_RANGE));
        let c = to_fixed(rng.random_range(C_RANGE.0..=C_RANGE.1));
        visit(x, y, c);
    }
    Ok(report)
}
