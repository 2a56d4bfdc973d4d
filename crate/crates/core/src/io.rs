//! Plain-text outputs: CSV tables with round-trip-exact numbers and
//! one-line check reports.

use std::io::{self, Write};

use crate::meanvariance::FrontierRow;
use crate::simulate::{PathRecord, SimReport};
use crate::sre::RiccatiSolution;

/// 17 significant digits, `.` as decimal separator; parses back to the same
/// `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn riccati_header(sol: &RiccatiSolution) -> String {
    let m = sol.v1.first().map_or(0, |v| v.len());
    let mut cols = vec!["t".to_string(), "P1".into(), "P2".into()];
    cols.extend((1..=m).map(|j| format!("v1_{j}")));
    cols.extend((1..=m).map(|j| format!("v2_{j}")));
    cols.join(",")
}

/// Columns `t, P1, P2, v1_1..v1_m, v2_1..v2_m`, one row per grid node.
pub fn write_riccati_csv<W: Write>(mut w: W, sol: &RiccatiSolution) -> io::Result<()> {
    writeln!(w, "{}", riccati_header(sol))?;
    for k in 0..sol.times.len() {
        let mut row = vec![num(sol.times[k]), num(sol.p1[k]), num(sol.p2[k])];
        row.extend(sol.v1[k].iter().map(|&v| num(v)));
        row.extend(sol.v2[k].iter().map(|&v| num(v)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Riccati table for an efficient portfolio; the gains act on
/// `X - lambda_star·exp(-∫_t^T r)`, recorded in the comment header.
pub fn write_feedback_csv<W: Write>(
    mut w: W,
    sol: &RiccatiSolution,
    lambda_star: f64,
    discount: f64,
) -> io::Result<()> {
    writeln!(w, "# lambda_star={}", num(lambda_star))?;
    writeln!(w, "# discount={}", num(discount))?;
    writeln!(w, "# state=X-lambda_star*exp(-int_t^T r)")?;
    write_riccati_csv(w, sol)
}

pub fn write_frontier_csv<W: Write>(mut w: W, rows: &[FrontierRow]) -> io::Result<()> {
    writeln!(w, "z,lambda_star,variance,std_dev")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            num(r.z),
            num(r.lambda_star),
            num(r.variance),
            num(r.std_dev())
        )?;
    }
    Ok(())
}

pub fn write_paths_csv<W: Write>(mut w: W, records: &[PathRecord]) -> io::Result<()> {
    writeln!(w, "path,X_T,cost,crossed")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.path, num(r.x_t), num(r.cost), u8::from(r.crossed))?;
    }
    Ok(())
}

/// `key = value` block, one statistic per line.
pub fn format_sim_report(r: &SimReport) -> String {
    let fields = [
        ("J_hat", r.j_hat),
        ("J_se", r.j_se),
        ("EX_T", r.ex_t),
        ("EX_T_se", r.ex_t_se),
        ("VarX_T", r.var_x_t),
        ("VarX_T_se", r.var_x_t_se),
        ("crossing_fraction", r.crossing_fraction),
        ("crossing_se", r.crossing_se),
    ];
    let mut out = format!("paths = {}\nsteps = {}\n", r.paths, r.steps);
    for (k, v) in fields {
        out.push_str(&format!("{k} = {}\n", num(v)));
    }
    out
}

/// `name max_violation PASS|FAIL`.
pub fn check_line(name: &str, max_violation: f64, passed: bool) -> String {
    format!(
        "{name} {} {}",
        num(max_violation),
        if passed { "PASS" } else { "FAIL" }
    )
}
