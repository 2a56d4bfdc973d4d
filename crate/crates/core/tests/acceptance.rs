//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints its verdict line even when all of them pass.

use std::time::{Duration, Instant};

use conelq_core::bsdej::{check_elementary_inequality, run_harness, HarnessConfig, LatticeOptions, Pairing};
use conelq_core::conekit::exact_minimize_1d;
use conelq_core::meanvariance::PreparedMv;
use conelq_core::simulate::{optimality_probe, simulate_controlled, simulate_paths, verify_value};
use conelq_core::sre::{solve_sre, solve_truncated};
use conelq_core::{
    Cone, Control, DMatrix, DVector, HInput, HMark, LqCoefficients, MarketModel, Minimizer, PathConfig, Sign,
    SreOptions, Which,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Suite {
    failed: Vec<usize>,
}

impl Suite {
    fn record(&mut self, id: usize, title: &str, ok: bool, detail: String) {
        println!("criterion {id:>2} {:<4} {title}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id);
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn classical_market(cone: Cone) -> MarketModel {
    MarketModel::constant(
        1.0,
        0.03,
        DVector::from_element(1, 0.2),
        DMatrix::from_element(1, 1, 0.3),
        vec![],
        cone,
        1.0,
    )
}

fn jump_market() -> MarketModel {
    MarketModel::constant(
        1.0,
        0.03,
        DVector::from_element(1, 0.2),
        DMatrix::from_element(1, 1, 0.3),
        vec![(DVector::from_element(1, -0.3), 0.5)],
        Cone::orthant(1),
        1.0,
    )
}

/// One-mark scalar instance in the standard case.
fn jump_instance() -> LqCoefficients {
    LqCoefficients::scalar(1.0, 0.1, 0.5, 0.2, 0.4, 1.0, 0.5, 0.1, 1.0, &[(-0.3, 0.6, 1.0)])
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * gaussian(rng))
}

fn random_input(rng: &mut ChaCha8Rng, m: usize, n: usize, marks: usize, min_curvature: f64) -> HInput {
    let l = DMatrix::from_fn(m, m, |_, _| gaussian(rng));
    let r = &l * l.transpose() * rng.random_range(0.0..1.0) + DMatrix::identity(m, m) * min_curvature;
    let marks = (0..marks)
        .map(|_| HMark {
            e: rng.random_range(-0.9..0.9),
            f: random_vec(rng, m, 0.8),
            nu: rng.random_range(0.05..2.0),
        })
        .collect::<Vec<_>>();
    let mut input = HInput::new(
        r,
        DMatrix::from_fn(n, m, |_, _| gaussian(rng)),
        random_vec(rng, m, 1.0),
        random_vec(rng, n, 0.5),
        random_vec(rng, m, 0.5),
        marks,
        rng.random_range(0.0..3.0),
        rng.random_range(0.0..3.0),
    );
    input.lambda = random_vec(rng, n, 0.5);
    // Γᵢ ≥ -Pᵢ keeps the jump weights nonnegative.
    let (p1, p2) = (input.p1, input.p2);
    for g in input.gamma1.iter_mut() {
        *g = rng.random_range(-p1..2.0);
    }
    for g in input.gamma2.iter_mut() {
        *g = rng.random_range(-p2..2.0);
    }
    input
}

fn criterion_1(s: &mut Suite) {
    let model = classical_market(Cone::full(1));
    let ((prep, level), elapsed) = timed(|| {
        let p = PreparedMv::new(&model, &SreOptions::with_steps(2000)).unwrap();
        let level = p.level();
        (p, level)
    });
    let theta2 = (0.2f64 / 0.3).powi(2);
    let exact = (2.0 * 0.03 - theta2).exp();
    let rel = (prep.p20 - exact).abs() / exact;
    s.record(
        1,
        "closed-form Riccati",
        rel <= 1e-6 && elapsed < Duration::from_secs(1),
        format!("P2(0)={:.12} exact={exact:.12} rel={rel:.2e} time={elapsed:.2?} level={level:.6}", prep.p20),
    );
}

fn criterion_2(s: &mut Suite) {
    // Steep drift so that the smaller radii actually bind.
    let k = LqCoefficients::scalar(1.0, 0.1, 2.0, 0.2, 0.4, 1.0, 0.1, 0.1, 1.0, &[(-0.3, 0.6, 1.0)]);
    let cone = Cone::full(1);
    let opts = SreOptions::with_steps(200);
    let radii = [1.0, 2.0, 4.0, 8.0, 16.0];
    let sols: Vec<_> = radii
        .iter()
        .map(|&r| solve_truncated(&k, &cone, r, &opts).unwrap())
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for w in sols.windows(2) {
        for node in 0..w[0].p1.len() {
            worst = worst.max(w[1].p1[node] - w[0].p1[node]);
            worst = worst.max(w[1].p2[node] - w[0].p2[node]);
        }
    }
    let full = solve_sre(&k, &cone, &opts).unwrap();
    let max_gain = full.v1.iter().chain(&full.v2).map(|v| v.amax()).fold(0.0, f64::max);
    let spread = sols[0].p1[0] - sols[4].p1[0];
    s.record(
        2,
        "truncation monotonicity",
        worst <= 1e-9,
        format!("max increase={worst:.2e} P1(0) k=1..16 spread={spread:.4e} max|v|={max_gain:.3}"),
    );
}

fn criterion_3(s: &mut Suite) {
    let opts = SreOptions::with_steps(400);
    let mut worst = 0.0f64;
    let mut instances = 0;

    // Standard case, scalar: P ∈ [0, (c+1)e^{cT} - 1] with
    // c = max(2A + C² + Σ ν E², Q, G).
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut standard = vec![jump_instance()];
    for _ in 0..20 {
        let e = rng.random_range(-0.9..0.9);
        standard.push(LqCoefficients::scalar(
            rng.random_range(0.5..2.0),
            rng.random_range(-0.5..0.5),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.5..0.5),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.1..1.0),
            rng.random_range(-0.2..0.2),
            rng.random_range(0.0..2.0),
            &[(e, rng.random_range(-1.0..1.0), rng.random_range(0.0..1.5))],
        ));
    }
    for k in &standard {
        let (a, c, q, g) = (k.a[0], k.c[0][0], k.q[0], k.g);
        let jump: f64 = k.marks.iter().map(|m| m.nu * m.e[0] * m.e[0]).sum();
        let rate = (2.0 * a + c * c + jump).max(q).max(g);
        let upper = (rate + 1.0) * (rate * k.horizon).exp() - 1.0;
        let sol = solve_sre(k, &Cone::full(1), &opts).unwrap();
        for p in sol.p1.iter().chain(&sol.p2) {
            worst = worst.max(p - upper).max(-p);
        }
        instances += 1;
    }

    // Singular case from mean-variance markets (Q = R = S = 0, C = 0):
    // P ≥ δ e^{-c₂(T-t)}, δ = min(G, σ² + Σ ν F²), c₂ = max(0, B²/δ - 2A).
    for model in [classical_market(Cone::full(1)), classical_market(Cone::orthant(1)), jump_market()] {
        let (k, _) = model.to_lq(0.0);
        let (a, b, d) = (k.a[0], k.b[0][0], k.d[0][(0, 0)]);
        let ell = d * d + k.marks.iter().map(|m| m.nu * m.f[0][0] * m.f[0][0]).sum::<f64>();
        let delta = ell.min(k.g);
        let c2 = (b * b / delta - 2.0 * a).max(0.0);
        let sol = solve_sre(&k, &model.cone, &opts).unwrap();
        for (i, t) in sol.times.iter().enumerate() {
            let lower = delta * (-c2 * (k.horizon - t)).exp();
            worst = worst.max(lower - sol.p1[i]).max(lower - sol.p2[i]);
        }
        instances += 1;
    }
    s.record(
        3,
        "a-priori bounds",
        worst <= 1e-7,
        format!("{instances} instances, worst violation={worst:.2e}"),
    );
}

fn criterion_4(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_abs = 0.0f64;
    for _ in 0..10_000 {
        let m = rng.random_range(1..=3);
        let n = rng.random_range(1..=2);
        let j = rng.random_range(0..=2);
        let input = random_input(&mut rng, m, n, j, 0.0);
        let v = random_vec(&mut rng, m, 2.0);
        let lhs = input.eval_h2(&v);
        let rhs = input.swapped().eval_h1(&-&v);
        worst_abs = worst_abs.max((lhs - rhs).abs());
    }

    let opts = SreOptions::with_steps(400);
    let mut worst_sym = 0.0f64;
    let planar = LqCoefficients::constant(
        1.0,
        0.1,
        DVector::from_vec(vec![0.5, -0.3]),
        DVector::from_element(1, 0.2),
        DMatrix::from_row_slice(1, 2, &[0.4, 0.1]),
        1.0,
        DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]),
        DVector::from_vec(vec![0.1, 0.0]),
        1.0,
        vec![(-0.3, DVector::from_vec(vec![0.6, -0.2]), 1.0)],
    );
    let cases = [
        (jump_instance(), Cone::full(1)),
        (planar.clone(), Cone::full(2)),
        (planar, Cone::coordinate(vec![Sign::Free, Sign::Zero])),
    ];
    for (k, cone) in &cases {
        assert!(cone.is_symmetric());
        let sol = solve_sre(k, cone, &opts).unwrap();
        for (a, b) in sol.p1.iter().zip(&sol.p2) {
            worst_sym = worst_sym.max((a - b).abs());
        }
    }
    s.record(
        4,
        "reflection identity",
        worst_abs <= 1e-12 && worst_sym <= 1e-8,
        format!("10^4 inputs max|H2-H1~|={worst_abs:.2e}; symmetric cones max|P1-P2|={worst_sym:.2e}"),
    );
}

fn criterion_5(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let minimizer = Minimizer::default();
    let bound = 1e3;
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let j = rng.random_range(0..=3);
        let n = rng.random_range(1..=2);
        let input = random_input(&mut rng, 1, n, j, 0.05);
        let which = if rng.random_bool(0.5) { Which::H1 } else { Which::H2 };
        if !input.objective(which).is_convex() {
            continue;
        }
        let (cone, lo) = if checked % 2 == 0 { (Cone::full(1), -bound) } else { (Cone::orthant(1), 0.0) };
        let got = minimizer.minimize(&input, which, &cone, None).unwrap();
        let (v, f) = exact_minimize_1d(&input, which, lo, bound).unwrap();
        assert!(v.abs() < bound, "oracle minimiser on the boundary");
        worst = worst.max((got.value - f).abs());
        checked += 1;
    }
    s.record(
        5,
        "minimizer vs exact 1-d oracle",
        worst <= 1e-8,
        format!("{checked} instances, max value gap={worst:.2e}"),
    );
}

fn criterion_6(s: &mut Suite) {
    let cfg = HarnessConfig::new(500, 6);
    let (report, elapsed) = timed(|| run_harness(&cfg, Pairing::Certified, &LatticeOptions::default(), 1e-10));
    let report = report.unwrap();
    s.record(
        6,
        "comparison harness",
        report.violations == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{} pairs, {} violations, worst gap={:.2e}, time={elapsed:.2?}",
            report.pairs, report.violations, report.worst_gap
        ),
    );
}

fn criterion_7(s: &mut Suite) {
    let (report, elapsed) = timed(|| check_elementary_inequality(1_000_000, 7, 0));
    let report = report.unwrap();
    s.record(
        7,
        "elementary inequality sweep",
        report.passed() && report.violations == 0 && elapsed < Duration::from_secs(5),
        format!(
            "{} triples, {} violations, min slack={:.3e}, time={elapsed:.2?}",
            report.evaluated, report.violations, report.min_slack
        ),
    );
}

fn criterion_8(s: &mut Suite) {
    let k = jump_instance();
    let sol = solve_sre(&k, &Cone::full(1), &SreOptions::with_steps(2000)).unwrap();
    let cfg = PathConfig::new(100_000, 500, 8);
    let report = simulate_controlled(&k, &sol, 1.0, &cfg, Control::Optimal).unwrap();
    let value = verify_value(&report, &sol, 1.0);
    let probe = optimality_probe(&k, &sol, 1.0, &cfg, &[0.2, -0.2, 0.5, -0.5]).unwrap();
    let arms: Vec<String> = probe
        .arms
        .iter()
        .map(|a| format!("eps={:+}: diff={:.4e}±{:.1e}", a.eps, a.diff, a.diff_se))
        .collect();
    s.record(
        8,
        "Monte Carlo optimality",
        value.passed && probe.passed(),
        format!(
            "J={:.5}±{:.1e} V={:.5} budget={:.1e}; {}",
            value.estimate,
            value.se,
            value.target,
            value.budget,
            arms.join(", ")
        ),
    );
}

fn criterion_9(s: &mut Suite) {
    let opts = SreOptions::with_steps(2000);

    // (a) every feasible market sits strictly below the degenerate level.
    let planar = MarketModel::constant(
        2.0,
        0.02,
        DVector::from_vec(vec![0.08, 0.12]),
        DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.05, 0.3]),
        vec![(DVector::from_vec(vec![-0.2, 0.1]), 0.4)],
        Cone::orthant(2),
        1.0,
    );
    let markets = [
        classical_market(Cone::full(1)),
        classical_market(Cone::orthant(1)),
        jump_market(),
        planar.clone(),
        MarketModel {
            cone: Cone::full(2),
            ..planar
        },
    ];
    let mut top_level = 0.0f64;
    for m in &markets {
        top_level = top_level.max(PreparedMv::new(m, &opts).unwrap().level());
    }
    let ok_a = top_level < 1.0;

    // (b) classical frontier against its closed form.
    let classical = PreparedMv::new(&classical_market(Cone::full(1)), &opts).unwrap();
    let theta2 = (0.2f64 / 0.3).powi(2);
    let riskless = 0.03f64.exp();
    let mut worst_rel = 0.0f64;
    for i in 1..=10 {
        let z = riskless + 0.05 * i as f64;
        let exact = (z - riskless).powi(2) / theta2.exp_m1();
        let row = classical.row(z).unwrap();
        worst_rel = worst_rel.max((row.variance - exact).abs() / exact);
    }
    let ok_b = worst_rel <= 1e-6;

    // (c) efficient portfolio on ℝ₊ with jumps, simulated.
    let model = jump_market();
    let z = 1.2;
    let prep = PreparedMv::new(&model, &opts).unwrap();
    let mv = prep.solve(z).unwrap();
    let cfg = PathConfig::new(100_000, 500, 9);
    let (sim, _) = simulate_paths(
        &prep.coeffs,
        &mv.riccati,
        mv.relative_x0(model.x0),
        &cfg,
        Control::Optimal,
        mv.lambda_star(),
        false,
    )
    .unwrap();
    let dm = (sim.ex_t - z).abs();
    let dv = (sim.var_x_t - mv.variance()).abs();
    let ok_c = dm <= 3.0 * sim.ex_t_se && dv <= 3.0 * sim.var_x_t_se;

    s.record(
        9,
        "mean-variance pipeline",
        ok_a && ok_b && ok_c,
        format!(
            "(a) max level={top_level:.6}; (b) max rel err={worst_rel:.2e}; \
             (c) E[X_T]={:.5}±{:.1e} vs {z}, Var={:.5}±{:.1e} vs {:.5}",
            sim.ex_t,
            sim.ex_t_se,
            sim.var_x_t,
            sim.var_x_t_se,
            mv.variance()
        ),
    );
}

fn criterion_10(s: &mut Suite) {
    let cfg = PathConfig::new(100_000, 500, 10);
    let run = |marks: &[(f64, f64, f64)]| {
        let k = LqCoefficients::scalar(1.0, 0.0, 0.1, 0.0, 0.3, 0.0, 0.1, 0.0, 1.0, marks);
        let sol = solve_sre(&k, &Cone::full(1), &SreOptions::with_steps(2000)).unwrap();
        simulate_controlled(&k, &sol, 1.0, &cfg, Control::Optimal).unwrap()
    };
    let jumpy = run(&[(-1.5, 0.5, 0.5)]);
    let smooth = run(&[]);
    let sigmas = jumpy.crossing_fraction / jumpy.crossing_se;
    s.record(
        10,
        "sign crossing",
        sigmas >= 5.0 && smooth.crossing_fraction == 0.0,
        format!(
            "with jumps {:.4}±{:.1e} ({sigmas:.1} SE); without jumps {}",
            jumpy.crossing_fraction, jumpy.crossing_se, smooth.crossing_fraction
        ),
    );
}

/// Projection onto the polar cone, written out per variant.
fn polar_projection(cone: &Cone, x: &DVector<f64>) -> DVector<f64> {
    match cone {
        Cone::FullSpace { dim } => DVector::zeros(*dim),
        Cone::Coordinate { signs } => DVector::from_fn(x.len(), |i, _| match signs[i] {
            Sign::Free => 0.0,
            Sign::NonNeg => x[i].min(0.0),
            Sign::NonPos => x[i].max(0.0),
            Sign::Zero => x[i],
        }),
        Cone::Ray { generator } => {
            let g = DVector::from_column_slice(generator);
            let excess = g.dot(x).max(0.0) / g.norm_squared();
            x - g * excess
        }
        Cone::Union { .. } => unreachable!("unions are not convex"),
    }
}

fn criterion_11(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cones = [
        Cone::full(3),
        Cone::orthant(3),
        Cone::coordinate(vec![Sign::Free, Sign::NonNeg, Sign::NonPos, Sign::Zero]),
        Cone::ray(vec![1.0, -2.0, 0.5]),
        Cone::ray(vec![0.3, 0.7]),
    ];
    let mut worst = 0.0f64;
    for cone in &cones {
        for _ in 0..10_000 {
            let x = random_vec(&mut rng, cone.dim(), 3.0);
            let p = cone.project(&x).unwrap();
            let q = polar_projection(cone, &x);
            let residual = (&x - &p - &q).amax();
            let orth = p.dot(&(&x - &p)).abs();
            assert!(cone.dual_membership(&(&x - &p), 1e-12).unwrap());
            worst = worst.max(residual).max(orth);
        }
    }

    // Π ∩ {|v| ≤ k} in the plane against exhaustive search on a grid.
    let radius = 1.0;
    let side = 801;
    let h = 2.0 * radius / (side - 1) as f64;
    let planar = [
        Cone::full(2),
        Cone::orthant(2),
        Cone::coordinate(vec![Sign::NonPos, Sign::Free]),
        Cone::coordinate(vec![Sign::NonNeg, Sign::Zero]),
        Cone::ray(vec![0.6, -0.8]),
    ];
    let mut worst_grid = 0.0f64;
    for cone in &planar {
        // Feasible grid points; the ray and the half-line are sampled along
        // themselves since a square grid misses them.
        let feasible: Vec<DVector<f64>> = match cone {
            Cone::Ray { generator } => {
                let g = DVector::from_column_slice(generator).normalize();
                (0..side).map(|i| &g * (i as f64 * radius / (side - 1) as f64)).collect()
            }
            _ => (0..side)
                .flat_map(|i| (0..side).map(move |j| (i, j)))
                .map(|(i, j)| DVector::from_vec(vec![-radius + i as f64 * h, -radius + j as f64 * h]))
                .filter(|v| v.norm() <= radius && cone.contains(v, 0.0))
                .collect(),
        };
        for _ in 0..200 {
            let x = random_vec(&mut rng, 2, 1.5);
            let p = cone.project_ball(&x, radius).unwrap();
            let best = feasible
                .iter()
                .map(|v| (&x - v).norm())
                .fold(f64::INFINITY, f64::min);
            let d = (&x - &p).norm();
            // p must be feasible, no grid point may beat it, and the best
            // grid point is within one cell diagonal of it.
            let infeasible = (p.norm() - radius).max(0.0) + if cone.contains(&p, 1e-12) { 0.0 } else { 1.0 };
            let gap = (best - d).abs() + infeasible;
            worst_grid = worst_grid.max(gap);
            assert!(best - d >= -1e-12, "grid point beats the projection");
        }
    }
    let cell = h * std::f64::consts::SQRT_2;
    s.record(
        11,
        "Moreau decomposition",
        worst <= 1e-12 && worst_grid <= cell,
        format!("max residual={worst:.2e}; ball projection max grid gap={worst_grid:.2e} (cell {cell:.2e})"),
    );
}

fn main() {
    let mut suite = Suite { failed: Vec::new() };
    let criteria: [fn(&mut Suite); 11] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
    ];
    // Sequential on purpose: several criteria carry wall-clock limits.
    for c in criteria {
        c(&mut suite);
    }
    if suite.failed.is_empty() {
        println!("acceptance: all 11 criteria PASS");
    } else {
        println!("acceptance: FAIL {:?}", suite.failed);
        std::process::exit(1);
    }
}
