//! JSON run configuration.
//!
//! Time-dependent coefficients are given on a uniform grid of `intervals`
//! pieces over `[0, horizon]`. Every numeric field accepts the value for one
//! interval (broadcast to all of them) or a list with one value per interval.
//! A bare number also broadcasts over vector and matrix entries.

use conelq_core::bsdej::{HarnessConfig, LatticeBsdej, LatticeOptions, Pairing};
use conelq_core::meanvariance::{MarketMark, MarketModel};
use conelq_core::{Cone, DMatrix, DVector, LqCoefficients, LqMark, Minimizer, Scheme, SreOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sre,
    Frontier,
    Simulate,
    CheckComparison,
    CheckInequality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<LqModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<Cone>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inequality: Option<InequalityConfig>,
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_output() -> String {
    ".".into()
}

/// A number, a list, a list of lists or a list of matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    Tensor(Vec<Vec<Vec<f64>>>),
}

impl Field {
    fn zero() -> Self {
        Field::Scalar(0.0)
    }

    /// One scalar per interval.
    fn scalars(&self, name: &str, k: usize) -> Result<Vec<f64>, CliError> {
        match self {
            Field::Scalar(v) => Ok(vec![*v; k]),
            Field::Vector(v) if v.len() == k => Ok(v.clone()),
            _ => Err(invalid(name, &format!("expected a number or {k} numbers"))),
        }
    }

    /// One `len`-vector per interval.
    fn vectors(&self, name: &str, k: usize, len: usize) -> Result<Vec<DVector<f64>>, CliError> {
        match self {
            Field::Scalar(v) => Ok(vec![DVector::from_element(len, *v); k]),
            Field::Vector(v) if v.len() == len => Ok(vec![DVector::from_column_slice(v); k]),
            Field::Matrix(rows) if rows.len() == k && rows.iter().all(|r| r.len() == len) => {
                Ok(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
            }
            _ => Err(invalid(
                name,
                &format!("expected a number, a {len}-vector or {k} such vectors"),
            )),
        }
    }

    /// One `rows × cols` matrix per interval, given row by row.
    fn matrices(&self, name: &str, k: usize, rows: usize, cols: usize) -> Result<Vec<DMatrix<f64>>, CliError> {
        let shaped = |m: &Vec<Vec<f64>>| m.len() == rows && m.iter().all(|r| r.len() == cols);
        let build = |m: &Vec<Vec<f64>>| DMatrix::from_fn(rows, cols, |i, j| m[i][j]);
        match self {
            Field::Scalar(v) => Ok(vec![DMatrix::from_element(rows, cols, *v); k]),
            Field::Matrix(m) if shaped(m) => Ok(vec![build(m); k]),
            Field::Tensor(t) if t.len() == k && t.iter().all(shaped) => Ok(t.iter().map(build).collect()),
            _ => Err(invalid(
                name,
                &format!("expected a number, a {rows}x{cols} matrix or {k} such matrices"),
            )),
        }
    }
}

fn invalid(field: &str, msg: &str) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqMarkConfig {
    #[serde(default = "Field::zero")]
    pub e: Field,
    #[serde(default = "Field::zero")]
    pub f: Field,
    pub nu: f64,
}

/// Coefficients of the controlled scalar SDE and its quadratic cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqModelConfig {
    pub horizon: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub intervals: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub control_dim: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub noise_dim: usize,
    pub a: Field,
    pub b: Field,
    #[serde(default = "Field::zero")]
    pub c: Field,
    pub d: Field,
    #[serde(default = "Field::zero")]
    pub q: Field,
    #[serde(default = "Field::zero")]
    pub r: Field,
    #[serde(default = "Field::zero")]
    pub s: Field,
    pub g: f64,
    #[serde(default)]
    pub marks: Vec<LqMarkConfig>,
}

impl LqModelConfig {
    pub fn build(&self) -> Result<LqCoefficients, CliError> {
        let (k, m, n) = (self.intervals, self.control_dim, self.noise_dim);
        if k == 0 || m == 0 || n == 0 {
            return Err(invalid("model", "intervals, control_dim and noise_dim must be positive"));
        }
        Ok(LqCoefficients {
            horizon: self.horizon,
            a: self.a.scalars("model.a", k)?,
            b: self.b.vectors("model.b", k, m)?,
            c: self.c.vectors("model.c", k, n)?,
            d: self.d.matrices("model.d", k, n, m)?,
            q: self.q.scalars("model.q", k)?,
            r: self.r.matrices("model.r", k, m, m)?,
            s: self.s.vectors("model.s", k, m)?,
            g: self.g,
            marks: self
                .marks
                .iter()
                .enumerate()
                .map(|(j, mk)| {
                    Ok(LqMark {
                        e: mk.e.scalars(&format!("model.marks[{j}].e"), k)?,
                        f: mk.f.vectors(&format!("model.marks[{j}].f"), k, m)?,
                        nu: mk.nu,
                    })
                })
                .collect::<Result<_, CliError>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketMarkConfig {
    pub f: Field,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub horizon: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub intervals: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub assets: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub noise_dim: usize,
    pub r: Field,
    pub mu: Field,
    /// `assets × noise_dim`.
    pub sigma: Field,
    #[serde(default)]
    pub marks: Vec<MarketMarkConfig>,
    pub x0: f64,
    /// Target means for the frontier.
    #[serde(default)]
    pub targets: Vec<f64>,
    /// Target whose efficient feedback is written out (frontier mode) or
    /// simulated (simulate mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

impl MarketConfig {
    pub fn build(&self, cone: Cone) -> Result<MarketModel, CliError> {
        let (k, m, n) = (self.intervals, self.assets, self.noise_dim);
        if k == 0 || m == 0 || n == 0 {
            return Err(invalid("market", "intervals, assets and noise_dim must be positive"));
        }
        Ok(MarketModel {
            horizon: self.horizon,
            r: self.r.scalars("market.r", k)?,
            mu: self.mu.vectors("market.mu", k, m)?,
            sigma: self.sigma.matrices("market.sigma", k, m, n)?,
            marks: self
                .marks
                .iter()
                .enumerate()
                .map(|(j, mk)| {
                    Ok(MarketMark {
                        f: mk.f.vectors(&format!("market.marks[{j}].f"), k, m)?,
                        nu: mk.nu,
                    })
                })
                .collect::<Result<_, CliError>>()?,
            cone,
            x0: self.x0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    Rk4,
    ImplicitEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub scheme: SchemeName,
    /// Stopping tolerance of the pointwise minimisation.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_bound_tol")]
    pub bound_tol: f64,
    /// Restrict controls to a ball of this radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

fn default_steps() -> usize {
    2000
}
fn default_tol() -> f64 {
    Minimizer::default().tol
}
fn default_bound_tol() -> f64 {
    SreOptions::default().bound_tol
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            steps: default_steps(),
            scheme: SchemeName::default(),
            tol: default_tol(),
            bound_tol: default_bound_tol(),
            radius: None,
        }
    }
}

impl Numerics {
    pub fn sre_options(&self) -> Result<SreOptions, CliError> {
        if self.steps == 0 || !(self.tol > 0.0) || !(self.bound_tol > 0.0) {
            return Err(invalid("numerics", "steps, tol and bound_tol must be positive"));
        }
        let mut opts = SreOptions::with_steps(self.steps);
        opts.scheme = match self.scheme {
            SchemeName::Rk4 => Scheme::Rk4,
            SchemeName::ImplicitEuler => Scheme::ImplicitEuler,
        };
        opts.minimizer = Minimizer::new(self.tol);
        opts.bound_tol = self.bound_tol;
        Ok(opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlConfig {
    Optimal,
    Zero,
    Perturbed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    /// Initial state for an LQ model; market runs start from `market.x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default = "default_control")]
    pub control: ControlConfig,
    /// Perturbations for the optimality probe.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probe: Vec<f64>,
    #[serde(default)]
    pub write_paths: bool,
}

fn default_control() -> ControlConfig {
    ControlConfig::Optimal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPair {
    pub a: LatticeBsdej,
    pub b: LatticeBsdej,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    #[serde(default = "default_pairing")]
    pub pairing: Pairing,
    #[serde(default = "default_cmp_tol")]
    pub tol: f64,
    #[serde(default = "LatticeOptions::default")]
    pub lattice: LatticeOptions,
    /// Randomised pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harness: Option<HarnessConfig>,
    /// A single user-specified pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<ExplicitPair>,
}

fn default_pairing() -> Pairing {
    Pairing::Certified
}
fn default_cmp_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub grid_side: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    1_000_000
}

impl Default for InequalityConfig {
    fn default() -> Self {
        InequalityConfig {
            samples: default_samples(),
            grid_side: 0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Fills mode-dependent defaults and applies a seed override, producing
    /// the configuration that is actually run.
    pub fn effective(mut self, seed: Option<u64>) -> Self {
        if self.mode == Mode::CheckInequality && self.inequality.is_none() {
            self.inequality = Some(InequalityConfig::default());
        }
        if let Some(seed) = seed {
            if let Some(mc) = self.mc.as_mut() {
                mc.seed = seed;
            }
            if let Some(h) = self.comparison.as_mut().and_then(|c| c.harness.as_mut()) {
                h.seed = seed;
            }
            if let Some(i) = self.inequality.as_mut() {
                i.seed = seed;
            }
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// The configured cone, or the full space of dimension `dim`.
    pub fn cone_or_full(&self, dim: usize) -> Cone {
        self.cone.clone().unwrap_or_else(|| Cone::full(dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcasting_rules() {
        let f = Field::Scalar(2.0);
        assert_eq!(f.scalars("x", 3).unwrap(), vec![2.0; 3]);
        assert_eq!(f.matrices("x", 2, 2, 3).unwrap()[1], DMatrix::from_element(2, 3, 2.0));
        let v = Field::Vector(vec![1.0, 2.0]);
        assert_eq!(v.scalars("x", 2).unwrap(), vec![1.0, 2.0]);
        assert_eq!(v.vectors("x", 5, 2).unwrap().len(), 5);
        assert!(v.scalars("x", 3).is_err());
        let per = Field::Matrix(vec![vec![1.0], vec![2.0]]);
        assert_eq!(per.vectors("x", 2, 1).unwrap()[1][0], 2.0);
        let d = Field::Matrix(vec![vec![1.0, 2.0]]);
        let m = d.matrices("d", 4, 1, 2).unwrap();
        assert_eq!(m[3][(0, 1)], 2.0);
    }

    #[test]
    fn untagged_fields_parse_by_depth() {
        let f: Vec<Field> = serde_json::from_str("[1, [1, 2], [[1]], [[[1]]]]").unwrap();
        assert!(matches!(f[0], Field::Scalar(_)));
        assert!(matches!(f[1], Field::Vector(_)));
        assert!(matches!(f[2], Field::Matrix(_)));
        assert!(matches!(f[3], Field::Tensor(_)));
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let err = RunConfig::parse(r#"{"mode": "sre", "bogus": 1}"#).unwrap_err();
        assert!(matches!(err, CliError::Parse(_)));
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let cfg = RunConfig::parse(r#"{"mode": "check-inequality"}"#).unwrap().effective(Some(9));
        assert_eq!(cfg.inequality.unwrap().seed, 9);
    }
}
