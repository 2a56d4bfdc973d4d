use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conelq"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn zero_instance_gives_unit_riccati() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&configs().join("sre_zero.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&tmp.path().join("riccati.csv"));
    assert_eq!(rows.len(), 101);
    for r in rows {
        assert_eq!((r[1], r[2]), (1.0, 1.0));
    }
}

#[test]
fn classical_frontier_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&configs().join("frontier_classical.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&tmp.path().join("frontier.csv"));
    assert_eq!(rows.len(), 10);
    let theta2 = (0.2f64 / 0.3).powi(2);
    let base = 0.03f64.exp();
    for r in &rows {
        let exact = (r[0] - base).max(0.0).powi(2) / theta2.exp_m1();
        assert!((r[2] - exact).abs() <= 1e-6 * exact + 1e-15, "{r:?} vs {exact}");
        assert_eq!(r[3], r[2].sqrt());
    }
    let header = fs::read_to_string(tmp.path().join("feedback.csv")).unwrap();
    assert!(header.starts_with("# lambda_star="));
}

#[test]
fn inequality_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"mode": "check-inequality", "inequality": {"samples": 100000, "grid_side": 11}}"#,
    );
    let o = run(&cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let report = fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("violations = 0"));
    assert!(report.contains("elementary_inequality") && report.contains("PASS"));
}

#[test]
fn effective_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["sre_jump", "frontier_classical", "simulate_jump", "comparison_harness", "crossing"] {
        let first = run(&configs().join(format!("{name}.json")), tmp.path(), &["--dump-effective-config", "--seed", "5"]);
        assert_eq!(first.status.code(), Some(0), "{name}");
        let dumped = write_config(tmp.path(), "dump.json", &String::from_utf8(first.stdout.clone()).unwrap());
        let second = run(&dumped, tmp.path(), &["--dump-effective-config"]);
        assert_eq!(first.stdout, second.stdout, "{name}");
        let seeded = ["simulate_jump", "comparison_harness", "crossing"].contains(&name);
        assert_eq!(String::from_utf8(first.stdout).unwrap().contains("\"seed\": 5"), seeded, "{name}");
    }
}

#[test]
fn identical_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sim.json",
        r#"{
            "mode": "simulate",
            "model": {"horizon": 1, "a": 0.1, "b": 0.5, "c": 0.2, "d": 0.4, "q": 1, "r": 0.5, "s": 0.1, "g": 1,
                      "marks": [{"e": -0.3, "f": 0.6, "nu": 1}]},
            "numerics": {"steps": 200},
            "mc": {"paths": 2000, "steps": 100, "seed": 3, "x0": 1, "write_paths": true}
        }"#,
    );
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run(&cfg, &a, &[]);
    run(&cfg, &b, &[]);
    run(&cfg, &c, &["--seed", "4"]);
    for f in ["paths.csv", "report.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("paths.csv")).unwrap(), fs::read(c.join("paths.csv")).unwrap());
}

#[test]
fn exit_codes_are_categorised() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |json: &str| {
        let cfg = write_config(tmp.path(), "x.json", json);
        run(&cfg, &tmp.path().join("out"), &[]).status.code()
    };
    assert_eq!(code("{ not json"), Some(2));
    assert_eq!(code(r#"{"mode": "sre", "extra": true}"#), Some(2));
    assert_eq!(code(r#"{"mode": "sre"}"#), Some(3));
    assert_eq!(
        code(r#"{"mode": "sre", "model": {"horizon": 1, "a": 0, "b": [1, 2], "d": 0, "g": 1}}"#),
        Some(3)
    );
    // Infeasible market: zero drift.
    assert_eq!(
        code(r#"{"mode": "frontier", "market": {"horizon": 1, "r": 0.03, "mu": 0, "sigma": 0.3, "x0": 1, "targets": [1.1]}}"#),
        Some(3)
    );
    // Jump probability per step above one.
    assert_eq!(
        code(r#"{"mode": "check-comparison", "comparison": {"pairing": "adversarial",
                 "harness": {"pairs": 1, "seed": 0, "steps": 1, "horizon": 10}}}"#),
        Some(4)
    );
    // Own-jump coefficients below -1 break the comparison.
    assert_eq!(
        code(r#"{"mode": "check-comparison", "comparison": {"pairing": "adversarial",
                 "harness": {"pairs": 40, "seed": 1, "steps": 20, "dims": [1], "marks": [1], "gamma": -3}}}"#),
        Some(1)
    );
    assert!(!tmp.path().join("missing.json").exists());
    assert_eq!(
        bin().args(["--config", tmp.path().join("missing.json").to_str().unwrap()]).status().unwrap().code(),
        Some(2)
    );
}
