use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use conelq_core::bsdej::{check_comparison, check_elementary_inequality, run_harness, Verdict};
use conelq_core::io::{self, check_line, num};
use conelq_core::meanvariance::{efficient_frontier, PreparedMv};
use conelq_core::simulate::{optimality_probe, simulate_paths, verify_value};
use conelq_core::sre::{solve_sre, solve_truncated};
use conelq_core::{Control, PathConfig};

use crate::config::{ControlConfig, McConfig, Mode, RunConfig};
use crate::error::CliError;

/// What a run produced: the report text and whether every check passed.
pub struct Outcome {
    pub report: String,
    pub passed: bool,
}

struct Report {
    text: String,
    passed: bool,
}

impl Report {
    fn new() -> Self {
        Report {
            text: String::new(),
            passed: true,
        }
    }

    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        self.text.push_str(&format!("{key} = {value}\n"));
    }

    fn check(&mut self, name: &str, violation: f64, ok: bool) {
        self.passed &= ok;
        self.text.push_str(&check_line(name, violation, ok));
        self.text.push('\n');
    }
}

fn require<'a, T>(section: &'a Option<T>, name: &str, mode: Mode) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("mode {mode:?} needs a `{name}` section")))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out_dir)?;
    let mut rep = Report::new();
    rep.kv("mode", serde_json::to_string(&cfg.mode).unwrap_or_default().trim_matches('"'));
    match cfg.mode {
        Mode::Sre => run_sre(cfg, out_dir, &mut rep)?,
        Mode::Frontier => run_frontier(cfg, out_dir, &mut rep)?,
        Mode::Simulate => run_simulate(cfg, out_dir, &mut rep)?,
        Mode::CheckComparison => run_comparison(cfg, &mut rep)?,
        Mode::CheckInequality => run_inequality(cfg, &mut rep)?,
    }
    rep.kv("status", if rep.passed { "PASS" } else { "FAIL" });
    let mut f = create(out_dir, "report.txt")?;
    f.write_all(rep.text.as_bytes())?;
    f.flush()?;
    Ok(Outcome {
        report: rep.text,
        passed: rep.passed,
    })
}

fn run_sre(cfg: &RunConfig, out: &Path, rep: &mut Report) -> Result<(), CliError> {
    let coeffs = require(&cfg.model, "model", cfg.mode)?.build()?;
    let cone = cfg.cone_or_full(coeffs.control_dim());
    let opts = cfg.numerics.sre_options()?;
    let sol = match cfg.numerics.radius {
        Some(r) => solve_truncated(&coeffs, &cone, r, &opts)?,
        None => solve_sre(&coeffs, &cone, &opts)?,
    };
    let mut f = create(out, "riccati.csv")?;
    io::write_riccati_csv(&mut f, &sol)?;
    f.flush()?;
    rep.kv("case", format!("{:?}", sol.case));
    rep.kv("P1_0", num(sol.p1[0]));
    rep.kv("P2_0", num(sol.p2[0]));
    let b = &sol.bounds;
    let tol = cfg.numerics.bound_tol;
    rep.check("upper_bound", b.upper_violation, b.upper_violation <= tol);
    rep.check("nonnegativity", b.negativity, b.negativity <= tol);
    if b.lower.is_some() {
        rep.check("lower_bound", b.lower_violation, b.lower_violation <= tol);
    }
    Ok(())
}

fn run_frontier(cfg: &RunConfig, out: &Path, rep: &mut Report) -> Result<(), CliError> {
    let market = require(&cfg.market, "market", cfg.mode)?;
    let model = market.build(cfg.cone_or_full(market.assets))?;
    if market.targets.is_empty() {
        return Err(CliError::Validation("market.targets is empty".into()));
    }
    let opts = cfg.numerics.sre_options()?;
    let frontier = efficient_frontier(&model, &opts, &market.targets)?;
    let mut f = create(out, "frontier.csv")?;
    io::write_frontier_csv(&mut f, &frontier.rows)?;
    f.flush()?;
    let level = frontier.p20 * frontier.discount * frontier.discount;
    rep.kv("P1_0", num(frontier.p10));
    rep.kv("P2_0", num(frontier.p20));
    rep.kv("discount", num(frontier.discount));
    rep.kv("delta", num(frontier.delta));
    rep.kv("rows", frontier.rows.len());
    rep.check("strict_inequality", (level - 1.0).max(0.0), level < 1.0);
    if let Some(z) = market.target {
        let sol = PreparedMv::new(&model, &opts)?.solve(z)?;
        let mut f = create(out, "feedback.csv")?;
        io::write_feedback_csv(&mut f, &sol.riccati, sol.lambda_star(), sol.discount)?;
        f.flush()?;
        rep.kv("lambda_star", num(sol.lambda_star()));
        rep.kv("variance", num(sol.variance()));
    }
    Ok(())
}

fn path_config(mc: &McConfig) -> PathConfig {
    PathConfig {
        paths: mc.paths,
        steps: mc.steps,
        seed: mc.seed,
        antithetic: mc.antithetic,
    }
}

fn control(c: ControlConfig) -> Control {
    match c {
        ControlConfig::Optimal => Control::Optimal,
        ControlConfig::Zero => Control::Zero,
        ControlConfig::Perturbed(e) => Control::Perturbed(e),
    }
}

fn run_simulate(cfg: &RunConfig, out: &Path, rep: &mut Report) -> Result<(), CliError> {
    let mc = require(&cfg.mc, "mc", cfg.mode)?;
    let pc = path_config(mc);
    let opts = cfg.numerics.sre_options()?;
    let ctrl = control(mc.control);

    // `(z, variance)` when simulating an efficient portfolio.
    let (coeffs, sol, x0, offset, efficient) = match (&cfg.model, &cfg.market) {
        (Some(model), None) => {
            let coeffs = model.build()?;
            let cone = cfg.cone_or_full(coeffs.control_dim());
            let sol = match cfg.numerics.radius {
                Some(r) => solve_truncated(&coeffs, &cone, r, &opts)?,
                None => solve_sre(&coeffs, &cone, &opts)?,
            };
            let x0 = mc
                .x0
                .ok_or_else(|| CliError::Validation("mc.x0 is required for an LQ model".into()))?;
            (coeffs, sol, x0, 0.0, None)
        }
        (None, Some(market)) => {
            let model = market.build(cfg.cone_or_full(market.assets))?;
            let z = market
                .target
                .ok_or_else(|| CliError::Validation("market.target is required to simulate".into()))?;
            let prep = PreparedMv::new(&model, &opts)?;
            let mv = prep.solve(z)?;
            rep.kv("target", num(z));
            rep.kv("lambda_star", num(mv.lambda_star()));
            rep.kv("variance_formula", num(mv.variance()));
            let x0 = mv.relative_x0(model.x0);
            let (lambda, efficient) = (mv.lambda_star(), Some((z, mv.variance())));
            (prep.coeffs, mv.riccati, x0, lambda, efficient)
        }
        _ => {
            return Err(CliError::Validation(
                "simulate needs exactly one of `model` and `market`".into(),
            ))
        }
    };

    let (sim, records) = simulate_paths(&coeffs, &sol, x0, &pc, ctrl, offset, mc.write_paths)?;
    rep.text.push_str(&io::format_sim_report(&sim));
    if let Some(records) = records {
        let mut f = create(out, "paths.csv")?;
        io::write_paths_csv(&mut f, &records)?;
        f.flush()?;
    }
    if ctrl == Control::Optimal {
        let v = verify_value(&sim, &sol, x0);
        rep.kv("value", num(v.target));
        rep.check("value", (v.estimate - v.target).abs(), v.passed);
        if let Some((z, formula)) = efficient {
            let dm = (sim.ex_t - z).abs();
            rep.check("mean_target", dm, dm <= 3.0 * sim.ex_t_se);
            let dv = (sim.var_x_t - formula).abs();
            rep.check("variance_formula", dv, dv <= 3.0 * sim.var_x_t_se);
        }
    }
    if !mc.probe.is_empty() {
        let probe = optimality_probe(&coeffs, &sol, x0, &pc, &mc.probe)?;
        for arm in &probe.arms {
            rep.check(
                &format!("optimality eps={}", arm.eps),
                (-arm.diff).max(0.0),
                arm.passed,
            );
        }
    }
    Ok(())
}

fn run_comparison(cfg: &RunConfig, rep: &mut Report) -> Result<(), CliError> {
    let c = require(&cfg.comparison, "comparison", cfg.mode)?;
    match (&c.harness, &c.pair) {
        (Some(h), None) => {
            let r = run_harness(h, c.pairing, &c.lattice, c.tol)?;
            rep.kv("pairs", r.pairs);
            rep.kv("violations", r.violations);
            rep.kv("worst_gap", num(r.worst_gap));
            rep.check("comparison", r.worst_gap.max(0.0), r.violations == 0);
        }
        (None, Some(p)) => {
            let r = check_comparison(&p.a, &p.b, c.pairing, &c.lattice, c.tol)?;
            rep.kv("terminal_gap", num(r.terminal_gap));
            rep.kv("generator_gap", num(r.generator_gap));
            rep.kv("verdict", r.verdict.label());
            rep.check("comparison", r.max_gap.max(0.0), r.verdict != Verdict::Fail);
        }
        _ => {
            return Err(CliError::Validation(
                "comparison needs exactly one of `harness` and `pair`".into(),
            ))
        }
    }
    Ok(())
}

fn run_inequality(cfg: &RunConfig, rep: &mut Report) -> Result<(), CliError> {
    let c = require(&cfg.inequality, "inequality", cfg.mode)?;
    let r = check_elementary_inequality(c.samples, c.seed, c.grid_side)?;
    rep.kv("evaluated", r.evaluated);
    rep.kv("violations", r.violations);
    rep.kv("min_slack", num(r.min_slack));
    rep.kv(
        "argmin",
        format!("{} {} {}", num(r.argmin.0), num(r.argmin.1), num(r.argmin.2)),
    );
    rep.check("elementary_inequality", (-r.min_slack).max(0.0), r.passed());
    Ok(())
}

pub fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| PathBuf::from(&cfg.output))
}
