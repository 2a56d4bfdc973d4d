use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::builder::{
    ComponentGenerator, CrossTerm, GeneratorSpec, IncreasingMap, Source, TerminalSpec, TerminalTerm,
};
use super::lattice::{binomial, Kernel, LatticeBsdej, LatticeOptions, Layout, NODE_CAPACITY};
use crate::error::{Error, Result};

/// What the caller claims about a pair `(A, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// The hypotheses of the comparison theorem hold; every one of them is
    /// verified and a mismatch is a certificate error.
    Certified,
    /// No claim; the pair is solved and compared as is.
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// No violation found, but the hypotheses were not certified.
    Uncertified,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Uncertified => "UNCERTIFIED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `max (Y_i - Ȳ_i)` over every node and component, terminal slice included.
    pub max_gap: f64,
    /// `max (g_i - ḡ_i)` over terminal nodes.
    pub terminal_gap: f64,
    /// `max (f_i - f̄_i)` along the solution of `B` (beyond rounding slack).
    pub generator_gap: f64,
    pub tol: f64,
    pub verdict: Verdict,
}

fn compatible(a: &LatticeBsdej, b: &LatticeBsdej) -> Result<()> {
    if a.steps != b.steps || a.horizon != b.horizon || a.nu != b.nu || a.dim() != b.dim() {
        return Err(Error::Argument(
            "compared lattices must share horizon, steps, intensities and dimension".into(),
        ));
    }
    Ok(())
}

/// Solves `A` and `B` slice by slice and compares them at every node.
///
/// With [`Pairing::Certified`] the structural hypotheses are checked on both
/// builders, terminal dominance on every terminal node and generator
/// dominance at every node of `B`'s solution.
pub fn check_comparison(
    a: &LatticeBsdej,
    b: &LatticeBsdej,
    pairing: Pairing,
    opts: &LatticeOptions,
    tol: f64,
) -> Result<ComparisonReport> {
    compatible(a, b)?;
    let ka = Kernel::new(a, opts)?;
    let kb = Kernel::new(b, opts)?;
    let certified = pairing == Pairing::Certified;
    if certified {
        for (name, s) in [("A", a), ("B", b)] {
            s.generator
                .certify(&s.nu, s.dt())
                .map_err(|m| Error::Certificate(format!("generator {name}: {m}")))?;
        }
    }
    let n = a.steps;
    let marks = a.marks();
    let dim = a.dim();
    let widest = (n as u128 + 1) * binomial(n + marks, marks);
    if widest > NODE_CAPACITY {
        return Err(Error::Capacity {
            nodes: widest,
            capacity: NODE_CAPACITY,
        });
    }
    let layout = Layout::new(n, marks);
    let len = layout.nodes(n) * dim;
    let mut next_a = vec![0.0; len];
    let mut next_b = vec![0.0; len];
    ka.terminal(&layout, &mut next_a);
    kb.terminal(&layout, &mut next_b);
    let terminal_gap = max_gap(&next_a, &next_b);
    if certified && terminal_gap > 1e-12 * (1.0 + max_abs(&next_b)) {
        return Err(Error::Certificate(format!(
            "terminal dominance fails by {terminal_gap:e}"
        )));
    }
    let mut gap = terminal_gap;
    let mut generator_gap = f64::NEG_INFINITY;
    let mut ya = vec![0.0; len];
    let mut yb = vec![0.0; len];
    for i in (0..n).rev() {
        let m = layout.nodes(i) * dim;
        ka.slice(&layout, i, &next_a, &mut ya[..m], None, None)?;
        let g = kb.slice(&layout, i, &next_b, &mut yb[..m], None, certified.then_some(&ka))?;
        if certified {
            generator_gap = generator_gap.max(g);
            if g > 0.0 {
                return Err(Error::Certificate(format!(
                    "generator dominance fails at step {i} by {g:e}"
                )));
            }
        }
        gap = gap.max(max_gap(&ya[..m], &yb[..m]));
        std::mem::swap(&mut next_a, &mut ya);
        std::mem::swap(&mut next_b, &mut yb);
    }
    let verdict = match (gap <= tol, certified) {
        (false, _) => Verdict::Fail,
        (true, true) => Verdict::Pass,
        (true, false) => Verdict::Uncertified,
    };
    Ok(ComparisonReport {
        max_gap: gap,
        terminal_gap,
        generator_gap: if certified { generator_gap } else { f64::NAN },
        tol,
        verdict,
    })
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Parameters of the randomised comparison harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub pairs: usize,
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_marks")]
    pub marks: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Forces every own-jump coefficient to this value (e.g. `-3` for an
    /// adversarial search); `None` samples `γ ∈ [-1, 1.5]` with an atom at `-1`.
    #[serde(default)]
    pub gamma: Option<f64>,
}

fn default_steps() -> usize {
    60
}
fn default_dims() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_marks() -> Vec<usize> {
    vec![1, 2]
}
fn default_horizon() -> f64 {
    1.0
}

impl HarnessConfig {
    pub fn new(pairs: usize, seed: u64) -> Self {
        HarnessConfig {
            pairs,
            seed,
            steps: default_steps(),
            dims: default_dims(),
            marks: default_marks(),
            horizon: default_horizon(),
            gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessReport {
    pub pairs: usize,
    pub violations: usize,
    pub worst_gap: f64,
    pub tol: f64,
    /// Indices of pairs whose verdict was FAIL.
    pub failures: Vec<usize>,
}

/// Draws a pair `(A, B)` built so that `B` dominates `A`: identical
/// structure, `ḡ = g + nonnegative terms`, `f̄ = f + nonnegative terms`.
pub fn random_pair(rng: &mut impl Rng, cfg: &HarnessConfig) -> (LatticeBsdej, LatticeBsdej) {
    let dim = cfg.dims[rng.random_range(0..cfg.dims.len())];
    let marks = cfg.marks[rng.random_range(0..cfg.marks.len())];
    let nu: Vec<f64> = (0..marks).map(|_| rng.random_range(0.2..1.5)).collect();

    let mut components = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut c = ComponentGenerator::zero(dim, marks);
        for j in 0..dim {
            c.y[j] = if i == j {
                rng.random_range(-1.0..1.0)
            } else if rng.random_bool(0.6) {
                rng.random_range(0.0..1.0)
            } else {
                0.0
            };
        }
        c.z = rng.random_range(-1.0..1.0);
        for g in c.gamma.iter_mut() {
            *g = match cfg.gamma {
                Some(v) => v,
                None if rng.random_bool(0.3) => -1.0,
                None => rng.random_range(-1.0..1.5),
            };
        }
        for j in (0..dim).filter(|&j| j != i) {
            if rng.random_bool(0.6) {
                c.cross.push(CrossTerm {
                    from: j,
                    weight: rng.random_range(0.0..1.0),
                    map: random_map(rng),
                });
            }
        }
        c.source = Source {
            constant: rng.random_range(-1.0..1.0),
            amplitude: rng.random_range(0.0..0.5),
            frequency: rng.random_range(0.0..2.0),
        };
        components.push(c);
    }
    let generator = GeneratorSpec { components };
    let terminal = TerminalSpec {
        components: (0..dim)
            .map(|_| {
                let count = rng.random_range(1..=4);
                (0..count).map(|_| random_terminal_term(rng, marks, false)).collect()
            })
            .collect(),
    };

    let mut gen_b = generator.clone();
    for (i, c) in gen_b.components.iter_mut().enumerate() {
        if !rng.random_bool(0.3) {
            c.source.constant += rng.random_range(0.0..0.5);
        }
        if dim > 1 && rng.random_bool(0.3) {
            let from = (i + 1 + rng.random_range(0..dim - 1)) % dim;
            let hi = rng.random_range(0.0..1.0);
            c.cross.push(CrossTerm {
                from,
                weight: rng.random_range(0.0..1.0),
                map: IncreasingMap::Clamp { lo: 0.0, hi },
            });
        }
    }
    let mut term_b = terminal.clone();
    for terms in term_b.components.iter_mut() {
        if rng.random_bool(0.8) {
            let extra = rng.random_range(1..=3);
            for _ in 0..extra {
                terms.push(random_terminal_term(rng, marks, true));
            }
        }
    }
    let a = LatticeBsdej {
        horizon: cfg.horizon,
        steps: cfg.steps,
        nu: nu.clone(),
        generator,
        terminal,
    };
    let b = LatticeBsdej {
        horizon: cfg.horizon,
        steps: cfg.steps,
        nu,
        generator: gen_b,
        terminal: term_b,
    };
    (a, b)
}

fn random_map(rng: &mut impl Rng) -> IncreasingMap {
    match rng.random_range(0..3) {
        0 => IncreasingMap::Identity,
        1 => IncreasingMap::Ramp {
            slope_low: rng.random_range(0.0..0.5),
            slope_high: rng.random_range(0.5..1.5),
            knee: rng.random_range(-1.0..1.0),
        },
        _ => {
            let lo = rng.random_range(-2.0..0.0);
            IncreasingMap::Clamp {
                lo,
                hi: lo + rng.random_range(0.0..3.0),
            }
        }
    }
}

fn random_terminal_term(rng: &mut impl Rng, marks: usize, nonnegative: bool) -> TerminalTerm {
    let mut coef = rng.random_range(-1.0..1.0);
    if nonnegative {
        coef = f64::abs(coef);
    }
    let mark = rng.random_range(0..marks.max(1));
    match rng.random_range(0..6) {
        0 => TerminalTerm::Constant { value: coef },
        1 if !nonnegative => TerminalTerm::LinearW { coef },
        1 | 2 => TerminalTerm::CallW {
            coef,
            strike: rng.random_range(-0.5..0.5),
        },
        3 => TerminalTerm::PutW {
            coef,
            strike: rng.random_range(-0.5..0.5),
        },
        4 if marks > 0 => TerminalTerm::JumpCount {
            mark,
            coef: 0.5 * coef,
        },
        _ if marks > 0 => TerminalTerm::JumpIndicator { mark, coef },
        _ => TerminalTerm::Constant { value: coef },
    }
}

/// Runs `cfg.pairs` random pairs through [`check_comparison`].
pub fn run_harness(
    cfg: &HarnessConfig,
    pairing: Pairing,
    opts: &LatticeOptions,
    tol: f64,
) -> Result<HarnessReport> {
    if cfg.pairs == 0 || cfg.dims.is_empty() || cfg.marks.is_empty() {
        return Err(Error::Argument("harness needs pairs, dimensions and mark counts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = HarnessReport {
        pairs: cfg.pairs,
        violations: 0,
        worst_gap: f64::NEG_INFINITY,
        tol,
        failures: Vec::new(),
    };
    for p in 0..cfg.pairs {
        let (a, b) = random_pair(&mut rng, cfg);
        let r = check_comparison(&a, &b, pairing, opts, tol)?;
        report.worst_gap = report.worst_gap.max(r.max_gap);
        if r.verdict == Verdict::Fail {
            report.violations += 1;
            report.failures.push(p);
        }
    }
    Ok(report)
}
