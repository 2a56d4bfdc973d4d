use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::builder::{GeneratorSpec, IncreasingMap, TerminalSpec};
use crate::error::{Error, Result};

/// Largest number of stored nodes a lattice may hold.
pub const NODE_CAPACITY: u128 = 100_000_000;

/// A discrete-time backward equation with jumps on a recombining lattice.
///
/// One Brownian direction (±√Δt per step) and `J = nu.len()` independent
/// marks, each jumping at most once per step with probability `ν_j Δt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeBsdej {
    pub horizon: f64,
    pub steps: usize,
    pub nu: Vec<f64>,
    pub generator: GeneratorSpec,
    pub terminal: TerminalSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepping {
    /// `Y = E[Y'] + f(Y, Z, Φ)Δt`.
    #[default]
    Implicit,
    /// `Y = E[Y'] + f(E[Y'], Z, Φ)Δt`.
    Explicit,
}

/// How `Z` and the post-jump arguments of cross terms are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `Z` from the no-jump branches and cross terms read the post-jump
    /// continuation `E[Y'_j | jump e]`. Every branch weight is nonnegative
    /// under the certification conditions, so the scheme is order preserving.
    #[default]
    Monotone,
    /// `Z` from the full up/down conditional means and cross terms read
    /// `y_j + φ_{j,e}` at the node. Not order preserving in general.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptions {
    #[serde(default)]
    pub stepping: Stepping,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max_iter")]
    pub picard_max_iter: usize,
}

fn default_picard_tol() -> f64 {
    1e-12
}

fn default_picard_max_iter() -> usize {
    50
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions {
            stepping: Stepping::Implicit,
            discretization: Discretization::Monotone,
            picard_tol: default_picard_tol(),
            picard_max_iter: default_picard_max_iter(),
        }
    }
}

impl LatticeBsdej {
    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn marks(&self) -> usize {
        self.nu.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Argument(format!("horizon {} must be positive", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::Argument("lattice needs at least one step".into()));
        }
        if self.nu.iter().any(|n| !(*n > 0.0) || !n.is_finite()) {
            return Err(Error::Argument("mark intensities must be positive and finite".into()));
        }
        let jump_prob = self.dt() * self.nu.iter().sum::<f64>();
        if jump_prob >= 1.0 {
            return Err(Error::StepSize(jump_prob));
        }
        self.generator.validate(self.marks())?;
        self.terminal.validate(self.dim(), self.marks())
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

/// `Σ_{i=0}^{N} (i+1)·C(i+J, J)`: nodes of a fully stored lattice.
pub fn total_nodes(steps: usize, marks: usize) -> u128 {
    (0..=steps)
        .map(|i| (i as u128 + 1) * binomial(i + marks, marks))
        .sum()
}

/// Node bookkeeping shared by every slice.
///
/// Jump-count vectors are ranked by total count and then lexicographically,
/// so the vectors reachable by step `i` are exactly ranks `0..C(i+J, J)`.
/// Node `(i, k, c)` with Brownian level `d = 2k - i` lives at
/// `rank(c)·(i+1) + k` in slice `i`.
#[derive(Debug, Clone)]
pub struct Layout {
    steps: usize,
    marks: usize,
    counts: Vec<u32>,
    succ: Vec<u32>,
    ranks: HashMap<Vec<u32>, u32>,
}

impl Layout {
    pub fn new(steps: usize, marks: usize) -> Self {
        let mut vectors: Vec<Vec<u32>> = Vec::new();
        for total in 0..=steps as u32 {
            compositions(total, marks, &mut Vec::new(), &mut vectors);
        }
        let ranks: HashMap<Vec<u32>, u32> = vectors
            .iter()
            .enumerate()
            .map(|(r, v)| (v.clone(), r as u32))
            .collect();
        let mut succ = vec![u32::MAX; vectors.len() * marks];
        for (r, v) in vectors.iter().enumerate() {
            if v.iter().sum::<u32>() as usize == steps {
                continue;
            }
            for e in 0..marks {
                let mut w = v.clone();
                w[e] += 1;
                succ[r * marks + e] = ranks[&w];
            }
        }
        Layout {
            steps,
            marks,
            counts: vectors.concat(),
            succ,
            ranks,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Jump-count vectors reachable by step `i`.
    pub fn ranks(&self, i: usize) -> usize {
        binomial(i + self.marks, self.marks) as usize
    }

    pub fn nodes(&self, i: usize) -> usize {
        self.ranks(i) * (i + 1)
    }

    pub fn counts(&self, rank: usize) -> &[u32] {
        &self.counts[rank * self.marks..(rank + 1) * self.marks]
    }

    pub fn rank_of(&self, counts: &[u32]) -> Option<usize> {
        self.ranks.get(counts).map(|&r| r as usize)
    }

    /// Index of node `(i, level, counts)` in slice `i`, if it exists.
    pub fn index(&self, i: usize, level: i64, counts: &[u32]) -> Option<usize> {
        if i > self.steps || level.unsigned_abs() as usize > i || (level + i as i64) % 2 != 0 {
            return None;
        }
        if counts.len() != self.marks || counts.iter().sum::<u32>() as usize > i {
            return None;
        }
        let k = ((level + i as i64) / 2) as usize;
        Some(self.rank_of(counts)? * (i + 1) + k)
    }
}

fn compositions(total: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if parts == 0 {
        if total == 0 {
            out.push(prefix.clone());
        }
        return;
    }
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// Full `(Y, Z, Φ)` on every node.
#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub layout: Layout,
    pub dim: usize,
    pub marks: usize,
    pub dt: f64,
    /// `y[i][node·ℓ + c]`
    pub y: Vec<Vec<f64>>,
    /// `z[i][node·ℓ + c]`, empty on the terminal slice.
    pub z: Vec<Vec<f64>>,
    /// `phi[i][(node·ℓ + c)·J + e]`, empty on the terminal slice.
    pub phi: Vec<Vec<f64>>,
}

impl LatticeSolution {
    pub fn root(&self) -> &[f64] {
        &self.y[0][..self.dim]
    }

    pub fn y_at(&self, i: usize, level: i64, counts: &[u32]) -> Option<&[f64]> {
        let n = self.layout.index(i, level, counts)?;
        Some(&self.y[i][n * self.dim..(n + 1) * self.dim])
    }
}

#[derive(Clone)]
struct Cross {
    owner: usize,
    from: usize,
    weight: f64,
    map: IncreasingMap,
}

/// Precomputed per-instance data for the node update.
pub(crate) struct Kernel<'a> {
    spec: &'a LatticeBsdej,
    opts: LatticeOptions,
    dim: usize,
    marks: usize,
    dt: f64,
    sqdt: f64,
    p0: f64,
    pj: Vec<f64>,
    a: Vec<f64>,
    minv: Vec<f64>,
    b: Vec<f64>,
    gnu: Vec<f64>,
    cross: Vec<Cross>,
    total_nu: f64,
    /// Use the fixed-size kernel for small `(ℓ, J)` in the default scheme.
    pub(crate) fast: bool,
}

pub(crate) struct Work {
    e: Vec<f64>,
    avg0: Vec<f64>,
    z: Vec<f64>,
    phi: Vec<f64>,
    s: Vec<f64>,
    rest: Vec<f64>,
    y: Vec<f64>,
    tmp: Vec<f64>,
    src: Vec<f64>,
    src_other: Vec<f64>,
    f_other: Vec<f64>,
    f_self: Vec<f64>,
}

impl Work {
    fn new(dim: usize, marks: usize) -> Self {
        Work {
            e: vec![0.0; dim],
            avg0: vec![0.0; dim],
            z: vec![0.0; dim],
            phi: vec![0.0; dim * marks],
            s: vec![0.0; dim],
            rest: vec![0.0; dim],
            y: vec![0.0; dim],
            tmp: vec![0.0; dim],
            src: vec![0.0; dim],
            src_other: vec![0.0; dim],
            f_other: vec![0.0; dim],
            f_self: vec![0.0; dim],
        }
    }
}

impl<'a> Kernel<'a> {
    pub(crate) fn new(spec: &'a LatticeBsdej, opts: &LatticeOptions) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim();
        let marks = spec.marks();
        let dt = spec.dt();
        let literal = opts.discretization == Discretization::Literal;
        let lip = spec.generator.y_lipschitz(&spec.nu, literal);
        if opts.stepping == Stepping::Implicit && lip * dt >= 1.0 {
            return Err(Error::StepSize(lip * dt));
        }
        let mut a = vec![0.0; dim * dim];
        let mut b = vec![0.0; dim];
        let mut gnu = vec![0.0; dim * marks];
        let mut cross = Vec::new();
        for (i, c) in spec.generator.components.iter().enumerate() {
            a[i * dim..(i + 1) * dim].copy_from_slice(&c.y);
            b[i] = c.z;
            for e in 0..marks {
                gnu[i * marks + e] = c.gamma[e] * spec.nu[e];
            }
            for x in &c.cross {
                cross.push(Cross {
                    owner: i,
                    from: x.from,
                    weight: x.weight,
                    map: x.map.clone(),
                });
            }
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - dt * a[i * dim + j]
        });
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::StepSize(lip * dt))?;
        let minv = (0..dim * dim).map(|k| inv[(k / dim, k % dim)]).collect();
        let total_nu: f64 = spec.nu.iter().sum();
        Ok(Kernel {
            spec,
            opts: *opts,
            dim,
            marks,
            dt,
            sqdt: dt.sqrt(),
            p0: 1.0 - dt * total_nu,
            pj: spec.nu.iter().map(|n| n * dt).collect(),
            a,
            minv,
            b,
            gnu,
            cross,
            total_nu,
            fast: opts.stepping == Stepping::Implicit
                && opts.discretization == Discretization::Monotone
                && dim <= 3
                && marks <= 3,
        })
    }

    pub(crate) fn work(&self) -> Work {
        Work::new(self.dim, self.marks)
    }

    pub(crate) fn terminal(&self, layout: &Layout, out: &mut [f64]) {
        let n = self.spec.steps;
        let dim = self.dim;
        for r in 0..layout.ranks(n) {
            let counts = layout.counts(r);
            for k in 0..=n {
                let w = (2.0 * k as f64 - n as f64) * self.sqdt;
                let node = r * (n + 1) + k;
                self.spec
                    .terminal
                    .eval_into(w, counts, &mut out[node * dim..(node + 1) * dim]);
            }
        }
    }

    /// `rest_i = b_i z_i + Σ_e γ_ie ν_e φ_ie + Σ cross + source_i`, with
    /// `work.s` holding `Σ_e ν_e · (post-jump value of component j)`.
    #[inline]
    fn rest(&self, work: &mut Work, other: bool) {
        let j = self.marks;
        let src = if other { &work.src_other } else { &work.src };
        for i in 0..self.dim {
            let mut acc = self.b[i] * work.z[i] + src[i];
            for e in 0..j {
                acc += self.gnu[i * j + e] * work.phi[i * j + e];
            }
            work.rest[i] = acc;
        }
        for x in &self.cross {
            work.rest[x.owner] += x.weight * x.map.eval(work.s[x.from]);
        }
    }

    /// `Σ_e ν_e φ_{c,e}` for each component.
    #[inline]
    fn phi_mass(&self, work: &Work, c: usize) -> f64 {
        let j = self.marks;
        let mut acc = 0.0;
        for e in 0..j {
            acc += self.spec.nu[e] * work.phi[c * j + e];
        }
        acc
    }

    /// Full generator value at `(work.y, work.z, work.phi, work.s)` into `out`.
    #[inline]
    fn full(&self, work: &mut Work, other: bool) {
        self.rest(work, other);
        let dim = self.dim;
        for i in 0..dim {
            let mut acc = work.rest[i];
            for k in 0..dim {
                acc += self.a[i * dim + k] * work.y[k];
            }
            if other {
                work.f_other[i] = acc;
            } else {
                work.f_self[i] = acc;
            }
        }
    }

    /// Solves one slice from the next one, optionally storing `Z` and `Φ`.
    /// When `other` is given, returns the largest `f_other - f_self`
    /// evaluated at this lattice's node values.
    pub(crate) fn slice(
        &self,
        layout: &Layout,
        i: usize,
        next: &[f64],
        y: &mut [f64],
        store: Option<(&mut [f64], &mut [f64])>,
        other: Option<&Kernel>,
    ) -> Result<f64> {
        let dim = self.dim;
        let stride = (i + 1) * dim;
        let phi_stride = stride * self.marks.max(1);
        let t = i as f64 * self.dt;
        debug_assert_eq!(y.len(), layout.ranks(i) * stride);
        let parallel = layout.nodes(i) >= 4096 && rayon::current_num_threads() > 1;
        let run = |work: &mut Work, r: usize, yb: &mut [f64], zb: &mut [f64], pb: &mut [f64]| {
            self.block(layout, i, t, r, next, yb, zb, pb, other, work)
        };
        match store {
            Some((z, phi)) if parallel => y
                .par_chunks_mut(stride)
                .zip(z.par_chunks_mut(stride))
                .zip(phi.par_chunks_mut(phi_stride))
                .enumerate()
                .map_init(|| self.work(), |w, (r, ((yb, zb), pb))| run(w, r, yb, zb, pb))
                .try_reduce(|| 0.0, |a, b| Ok(a.max(b))),
            None if parallel => y
                .par_chunks_mut(stride)
                .enumerate()
                .map_init(|| self.work(), |w, (r, yb)| run(w, r, yb, &mut [], &mut []))
                .try_reduce(|| 0.0, |a, b| Ok(a.max(b))),
            Some((z, phi)) => {
                let mut work = self.work();
                let mut worst = 0.0f64;
                for (r, ((yb, zb), pb)) in y
                    .chunks_mut(stride)
                    .zip(z.chunks_mut(stride))
                    .zip(phi.chunks_mut(phi_stride))
                    .enumerate()
                {
                    worst = worst.max(run(&mut work, r, yb, zb, pb)?);
                }
                Ok(worst)
            }
            None => {
                let mut work = self.work();
                let mut worst = 0.0f64;
                for (r, yb) in y.chunks_mut(stride).enumerate() {
                    worst = worst.max(run(&mut work, r, yb, &mut [], &mut [])?);
                }
                Ok(worst)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn block(
        &self,
        layout: &Layout,
        i: usize,
        t: f64,
        r: usize,
        next: &[f64],
        y: &mut [f64],
        zo: &mut [f64],
        phio: &mut [f64],
        other: Option<&Kernel>,
        work: &mut Work,
    ) -> Result<f64> {
        if self.fast && other.is_none_or(|o| o.fast) {
            macro_rules! dispatch {
                ($(($d:literal, $j:literal)),*) => {
                    match (self.dim, self.marks) {
                        $(($d, $j) => return self.block_fixed::<$d, $j>(layout, i, t, r, next, y, zo, phio, other),)*
                        _ => {}
                    }
                };
            }
            dispatch!(
                (1, 0), (1, 1), (1, 2), (1, 3),
                (2, 0), (2, 1), (2, 2), (2, 3),
                (3, 0), (3, 1), (3, 2), (3, 3)
            );
        }
        let dim = self.dim;
        let jm = self.marks;
        let wn = i + 2;
        let literal = self.opts.discretization == Discretization::Literal;
        let half_inv_sqdt = 0.5 / self.sqdt;
        for (c, src) in work.src.iter_mut().enumerate() {
            *src = self.spec.generator.components[c].source.eval(t);
        }
        if let Some(o) = other {
            for (c, src) in work.src_other.iter_mut().enumerate() {
                *src = o.spec.generator.components[c].source.eval(t);
            }
        }
        let mut worst = 0.0f64;
        for k in 0..=i {
            let up0 = (r * wn + k + 1) * dim;
            let dn0 = (r * wn + k) * dim;
            for c in 0..dim {
                let u = next[up0 + c];
                let d = next[dn0 + c];
                let avg = 0.5 * (u + d);
                work.avg0[c] = avg;
                work.e[c] = self.p0 * avg;
                work.z[c] = if literal { self.p0 * (u - d) } else { u - d };
            }
            for e in 0..jm {
                let re = layout.succ[r * jm + e] as usize;
                let up = (re * wn + k + 1) * dim;
                let dn = (re * wn + k) * dim;
                let p = self.pj[e];
                for c in 0..dim {
                    let u = next[up + c];
                    let d = next[dn + c];
                    let avg = 0.5 * (u + d);
                    work.e[c] += p * avg;
                    work.phi[c * jm + e] = avg - work.avg0[c];
                    if literal {
                        work.z[c] += p * (u - d);
                    }
                }
            }
            for c in 0..dim {
                work.z[c] *= half_inv_sqdt;
            }

            match (self.opts.stepping, literal) {
                (Stepping::Implicit, false) => {
                    for c in 0..dim {
                        work.s[c] = self.total_nu * work.avg0[c] + self.phi_mass(work, c);
                    }
                    self.rest(work, false);
                    for c in 0..dim {
                        work.tmp[c] = work.e[c] + self.dt * work.rest[c];
                    }
                    for c in 0..dim {
                        let mut acc = 0.0;
                        for q in 0..dim {
                            acc += self.minv[c * dim + q] * work.tmp[q];
                        }
                        work.y[c] = acc;
                    }
                }
                (Stepping::Explicit, _) => {
                    for c in 0..dim {
                        let base = if literal { work.e[c] } else { work.avg0[c] };
                        work.s[c] = self.total_nu * base + self.phi_mass(work, c);
                        work.y[c] = work.e[c];
                    }
                    self.full(work, false);
                    for c in 0..dim {
                        work.y[c] = work.e[c] + self.dt * work.f_self[c];
                    }
                }
                (Stepping::Implicit, true) => {
                    work.y.copy_from_slice(&work.e);
                    let mut converged = false;
                    let mut residual = f64::INFINITY;
                    for _ in 0..self.opts.picard_max_iter {
                        for c in 0..dim {
                            work.s[c] = self.total_nu * work.y[c] + self.phi_mass(work, c);
                        }
                        self.full(work, false);
                        residual = 0.0;
                        let mut scale = 1.0f64;
                        for c in 0..dim {
                            let new = work.e[c] + self.dt * work.f_self[c];
                            residual = residual.max((new - work.y[c]).abs());
                            scale = scale.max(new.abs());
                            work.y[c] = new;
                        }
                        if residual <= self.opts.picard_tol * scale {
                            converged = true;
                            break;
                        }
                    }
                    if !converged {
                        return Err(Error::Convergence {
                            iterations: self.opts.picard_max_iter,
                            residual,
                        });
                    }
                }
            }

            for c in 0..dim {
                let v = work.y[c];
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite lattice value at step {i}")));
                }
                y[k * dim + c] = v;
            }
            if !zo.is_empty() {
                zo[k * dim..(k + 1) * dim].copy_from_slice(&work.z);
                phio[k * dim * jm..(k + 1) * dim * jm].copy_from_slice(&work.phi);
            }

            if let Some(o) = other {
                // Condition (4): evaluate both generators at this node's values,
                // with the post-jump arguments this discretisation uses.
                for c in 0..dim {
                    let base = if literal { work.y[c] } else { work.avg0[c] };
                    work.s[c] = self.total_nu * base + self.phi_mass(work, c);
                }
                o.full(work, true);
                self.full(work, false);
                for c in 0..dim {
                    let gap = work.f_other[c] - work.f_self[c];
                    let tol = 1e-12 * (1.0 + work.f_self[c].abs());
                    worst = worst.max(gap - tol);
                }
            }
        }
        Ok(worst)
    }
}

impl Kernel<'_> {
    #[inline(always)]
    fn rest_fixed<const D: usize, const J: usize>(
        &self,
        z: &[f64; D],
        phi: &[[f64; J]; D],
        s: &[f64; D],
        src: &[f64; D],
    ) -> [f64; D] {
        let mut rest = [0.0; D];
        for c in 0..D {
            let mut acc = self.b[c] * z[c] + src[c];
            let g = &self.gnu[c * J..(c + 1) * J];
            for e in 0..J {
                acc += g[e] * phi[c][e];
            }
            rest[c] = acc;
        }
        for x in &self.cross {
            rest[x.owner] += x.weight * x.map.eval(s[x.from]);
        }
        rest
    }

    /// Same update as the general path for the default scheme, with every
    /// per-node buffer on the stack.
    #[allow(clippy::too_many_arguments)]
    fn block_fixed<const D: usize, const J: usize>(
        &self,
        layout: &Layout,
        i: usize,
        t: f64,
        r: usize,
        next: &[f64],
        y: &mut [f64],
        zo: &mut [f64],
        phio: &mut [f64],
        other: Option<&Kernel>,
    ) -> Result<f64> {
        let wn = i + 2;
        let half_inv_sqdt = 0.5 / self.sqdt;
        let mut src = [0.0; D];
        let mut src_o = [0.0; D];
        for c in 0..D {
            src[c] = self.spec.generator.components[c].source.eval(t);
            if let Some(o) = other {
                src_o[c] = o.spec.generator.components[c].source.eval(t);
            }
        }
        let mut minv = [[0.0; D]; D];
        for c in 0..D {
            for q in 0..D {
                minv[c][q] = self.minv[c * D + q];
            }
        }
        let mut nu = [0.0; J];
        let mut pj = [0.0; J];
        let mut succ = [0usize; J];
        for e in 0..J {
            nu[e] = self.spec.nu[e];
            pj[e] = self.pj[e];
            succ[e] = layout.succ[r * J + e] as usize;
        }
        let base0 = r * wn * D;
        let mut worst = 0.0f64;
        for k in 0..=i {
            let lo = &next[base0 + k * D..base0 + (k + 2) * D];
            let mut avg0 = [0.0; D];
            let mut ex = [0.0; D];
            let mut z = [0.0; D];
            let mut s = [0.0; D];
            let mut phi = [[0.0; J]; D];
            for c in 0..D {
                let d = lo[c];
                let u = lo[D + c];
                let avg = 0.5 * (u + d);
                avg0[c] = avg;
                ex[c] = self.p0 * avg;
                z[c] = (u - d) * half_inv_sqdt;
            }
            for e in 0..J {
                let be = (succ[e] * wn + k) * D;
                let lj = &next[be..be + 2 * D];
                for c in 0..D {
                    let avg = 0.5 * (lj[c] + lj[D + c]);
                    ex[c] += pj[e] * avg;
                    phi[c][e] = avg - avg0[c];
                    s[c] += nu[e] * avg;
                }
            }
            let rest = self.rest_fixed::<D, J>(&z, &phi, &s, &src);
            let mut rhs = [0.0; D];
            for c in 0..D {
                rhs[c] = ex[c] + self.dt * rest[c];
            }
            let out = &mut y[k * D..(k + 1) * D];
            for c in 0..D {
                let mut acc = 0.0;
                for q in 0..D {
                    acc += minv[c][q] * rhs[q];
                }
                if !acc.is_finite() {
                    return Err(Error::Numeric(format!("non-finite lattice value at step {i}")));
                }
                out[c] = acc;
            }
            if !zo.is_empty() {
                zo[k * D..(k + 1) * D].copy_from_slice(&z);
                let po = &mut phio[k * D * J..(k + 1) * D * J];
                for c in 0..D {
                    po[c * J..(c + 1) * J].copy_from_slice(&phi[c]);
                }
            }

            if let Some(o) = other {
                let rest_o = o.rest_fixed::<D, J>(&z, &phi, &s, &src_o);
                for c in 0..D {
                    let mut fs = rest[c];
                    let mut fo = rest_o[c];
                    for q in 0..D {
                        fs += self.a[c * D + q] * out[q];
                        fo += o.a[c * D + q] * out[q];
                    }
                    worst = worst.max(fo - fs - 1e-12 * (1.0 + fs.abs()));
                }
            }
        }
        Ok(worst)
    }
}

fn check_capacity(nodes: u128) -> Result<()> {
    if nodes > NODE_CAPACITY {
        return Err(Error::Capacity {
            nodes,
            capacity: NODE_CAPACITY,
        });
    }
    Ok(())
}

fn slice_buffers(layout: &Layout, i: usize, dim: usize, marks: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = layout.nodes(i) * dim;
    (vec![0.0; n], vec![0.0; n], vec![0.0; n * marks.max(1)])
}

/// Backward induction storing every node.
pub fn solve_lattice(spec: &LatticeBsdej, opts: &LatticeOptions) -> Result<LatticeSolution> {
    check_capacity(total_nodes(spec.steps, spec.marks()))?;
    let kernel = Kernel::new(spec, opts)?;
    let layout = Layout::new(spec.steps, spec.marks());
    let n = spec.steps;
    let dim = spec.dim();
    let mut ys = vec![Vec::new(); n + 1];
    let mut zs = vec![Vec::new(); n + 1];
    let mut phis = vec![Vec::new(); n + 1];
    let mut terminal = vec![0.0; layout.nodes(n) * dim];
    kernel.terminal(&layout, &mut terminal);
    ys[n] = terminal;
    for i in (0..n).rev() {
        let (mut y, mut z, mut phi) = slice_buffers(&layout, i, dim, spec.marks());
        kernel.slice(&layout, i, &ys[i + 1], &mut y, Some((&mut z, &mut phi)), None)?;
        ys[i] = y;
        zs[i] = z;
        phis[i] = phi;
    }
    Ok(LatticeSolution {
        layout,
        dim,
        marks: spec.marks(),
        dt: spec.dt(),
        y: ys,
        z: zs,
        phi: phis,
    })
}

/// Backward induction keeping two slices at a time; returns `Y` at the root.
///
/// Only the widest slice has to fit in [`NODE_CAPACITY`], which admits much
/// finer grids than [`solve_lattice`].
pub fn solve_root(spec: &LatticeBsdej, opts: &LatticeOptions) -> Result<Vec<f64>> {
    let kernel = Kernel::new(spec, opts)?;
    root_with(&kernel, spec)
}

fn root_with(kernel: &Kernel, spec: &LatticeBsdej) -> Result<Vec<f64>> {
    check_capacity((spec.steps as u128 + 1) * binomial(spec.steps + spec.marks(), spec.marks()))?;
    let layout = Layout::new(spec.steps, spec.marks());
    let dim = spec.dim();
    let n = spec.steps;
    let mut next = vec![0.0; layout.nodes(n) * dim];
    kernel.terminal(&layout, &mut next);
    let mut y = vec![0.0; next.len()];
    for i in (0..n).rev() {
        let len = layout.nodes(i) * dim;
        kernel.slice(&layout, i, &next, &mut y[..len], None, None)?;
        std::mem::swap(&mut next, &mut y);
    }
    next.truncate(dim);
    Ok(next)
}
