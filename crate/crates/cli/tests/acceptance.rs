//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zonoinv::experiment::{run_experiment, ExperimentConfig, TrialOutcome, TrialRecord, TRIAL_CSV};
use zonoinv::invariance::{check_invariance_certificate, AffineSystem, InvarianceProblem};
use zonoinv::numerics::{binomial, Matrix};
use zonoinv::oracle::{finite_diff_gradient, finite_diff_jacobian, mc_volume, simulate_invariance};
use zonoinv::params::{
    sfg_volume, utpd_volume, Method, Objective, ObjectiveKind, Parameterization, SfgParameterization,
    UtpdParameterization, DEFAULT_FLOOR,
};
use zonoinv::solver::{solve_problem, SolveStatus, SolverOptions};
use zonoinv::sysgen::{TrialInstance, TrialSpec};
use zonoinv::zonotope::{volume_exact, AxisBox, Zonotope};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_utpd(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let mut g = Matrix::zeros(d, d);
    for i in 0..d {
        g[(i, i)] = rng.random_range(0.1..2.0);
        for j in i + 1..d {
            g[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    g
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn formula_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_utpd = 0.0f64;
    for k in 0..500 {
        let g = random_utpd(&mut rng, 1 + k % 8);
        worst_utpd = worst_utpd.max(rel(utpd_volume(&g).unwrap(), volume_exact(&g).unwrap()));
    }
    let mut worst_sfg = 0.0f64;
    for k in 0..500 {
        let d = 1 + k % 4;
        let p = rng.random_range(d..=8);
        let sfg = SfgParameterization::new(uniform_matrix(&mut rng, d, p), DEFAULT_FLOOR).unwrap();
        let gamma: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..2.0)).collect();
        let exact = volume_exact(&sfg.generators(&gamma).unwrap()).unwrap();
        worst_sfg = worst_sfg.max(rel(sfg_volume(&sfg, &gamma).unwrap(), exact));
    }
    verdict(
        worst_utpd <= 1e-12 && worst_sfg <= 1e-10,
        format!("max rel err UTPD {worst_utpd:.2e} (≤1e-12), SFG {worst_sfg:.2e} (≤1e-10)"),
    )
}

fn oracle_agreement() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut outside = 0;
    let mut worst = 0.0f64;
    for k in 0..100 {
        let d = 2 + k % 2;
        let p = rng.random_range(d..=6);
        let c = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = Zonotope::new(c, uniform_matrix(&mut rng, d, p)).unwrap();
        let exact = z.volume().unwrap();
        let (est, se) = mc_volume(&z, 100_000, 1000 + k as u64).unwrap();
        let score = (est - exact).abs() / se;
        worst = worst.max(score);
        if score > 3.0 {
            outside += 1;
        }
    }
    verdict(outside == 0, format!("{outside}/100 beyond 3 s.e., worst {worst:.2} s.e."))
}

fn log_concavity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let d = 1 + k % 4;
        let p = rng.random_range(d..=8);
        let sfg = SfgParameterization::new(uniform_matrix(&mut rng, d, p), DEFAULT_FLOOR).unwrap();
        let a: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..3.0)).collect();
        let b: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..3.0)).collect();
        let t: f64 = rng.random_range(0.0..=1.0);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let l = |g: &[f64]| sfg_volume(&sfg, g).unwrap().ln();
        let gap = t * l(&a) + (1.0 - t) * l(&b) - l(&mid);
        worst = worst.max(gap);
        if gap > 1e-9 {
            violations += 1;
        }
    }
    // log-volume is exactly linear in the log-diagonal of a UTPD matrix
    let mut worst_linear = 0.0f64;
    for k in 0..1000 {
        let d = 1 + k % 8;
        let g = random_utpd(&mut rng, d);
        let h = random_utpd(&mut rng, d);
        let t: f64 = rng.random_range(0.0..=1.0);
        let mut m = g.clone();
        for i in 0..d {
            m[(i, i)] = (t * g[(i, i)].ln() + (1.0 - t) * h[(i, i)].ln()).exp();
        }
        let lv = |x: &Matrix| utpd_volume(x).unwrap().ln();
        let err = (lv(&m) - (t * lv(&g) + (1.0 - t) * lv(&h))).abs();
        worst_linear = worst_linear.max(err);
    }
    verdict(
        violations == 0 && worst_linear <= 1e-9,
        format!("SFG chord violations {violations}/1000 (worst gap {worst:.2e}); UTPD log-linearity err {worst_linear:.2e}"),
    )
}

fn derivatives() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut check = |a: &[f64], fd: &[f64]| {
        let scale = a.iter().chain(fd).fold(0.0f64, |m, v| m.max(v.abs()));
        let err = a.iter().zip(fd).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let r = if scale == 0.0 { 0.0 } else { err / scale };
        worst = worst.max(r);
        if r > 1e-5 {
            failures += 1;
        }
    };
    for k in 0..200 {
        let d = 1 + k % 4;
        let p = rng.random_range(d..=8);
        let sfg = Parameterization::Sfg(SfgParameterization::new(uniform_matrix(&mut rng, d, p), DEFAULT_FLOOR).unwrap());
        let gamma: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..2.0)).collect();
        let du = 1 + k % 6;
        let utpd = Parameterization::Utpd(UtpdParameterization::new(du, DEFAULT_FLOOR).unwrap());
        let Parameterization::Utpd(u) = &utpd else { unreachable!() };
        let free = u.from_matrix(&random_utpd(&mut rng, du)).unwrap();
        let cases = [
            (ObjectiveKind::SumOfScalars, &sfg, &gamma),
            (ObjectiveKind::SumOfLogScalars, &sfg, &gamma),
            (ObjectiveKind::LogVolume, &sfg, &gamma),
            (ObjectiveKind::LogVolume, &utpd, &free),
        ];
        for (kind, param, x) in cases {
            let obj = Objective::new(kind, param.clone()).unwrap();
            let e = obj.eval(x).unwrap();
            check(&e.gradient, &finite_diff_gradient(|y| obj.value(y).unwrap(), x, h));
            let jac = finite_diff_jacobian(|y| obj.eval(y).unwrap().gradient, x, h);
            check(e.hessian.as_slice(), jac.as_slice());
        }
    }
    verdict(
        failures == 0,
        format!("{failures} mismatches over 200 points × 4 objective/parameterization pairs, worst rel err {worst:.2e}"),
    )
}

fn analytic_optima() -> Verdict {
    let opts = SolverOptions::default();
    let scalar = InvarianceProblem::new(
        AffineSystem::autonomous(Matrix::from_rows(&[vec![0.5]]).unwrap()).unwrap(),
        AxisBox::symmetric(1, 1.0),
        30,
        Parameterization::Sfg(SfgParameterization::new(Matrix::identity(1), DEFAULT_FLOOR).unwrap()),
        ObjectiveKind::SumOfScalars,
    )
    .unwrap();
    let r = solve_problem(&scalar, &opts).unwrap();
    let mut ok = r.status == SolveStatus::Optimal && (r.volume - 2.0).abs() <= 1e-6;
    let mut detail = format!("d=1 volume {:.9}", r.volume);
    for d in [2, 3, 6] {
        let p = InvarianceProblem::new(
            AffineSystem::autonomous(Matrix::identity(d)).unwrap(),
            AxisBox::symmetric(d, 1.0),
            30,
            Parameterization::Utpd(UtpdParameterization::new(d, DEFAULT_FLOOR).unwrap()),
            ObjectiveKind::LogVolume,
        )
        .unwrap();
        let r = solve_problem(&p, &opts).unwrap();
        let target = 2f64.powi(d as i32);
        ok &= r.status == SolveStatus::Optimal && rel(r.volume, target) <= 1e-3;
        detail += &format!("; box d={d} volume {:.6} (target {target})", r.volume);
    }
    verdict(ok, detail)
}

fn soundness(batch: &[TrialOutcome]) -> Verdict {
    let mut optimal = 0;
    let mut failed = 0;
    let mut worst = 0.0f64;
    let rows: Vec<&TrialOutcome> = batch.iter().filter(|o| (o.record.d_x, o.record.p) == (3, 6)).collect();
    for o in &rows {
        if o.record.status != SolveStatus::Optimal {
            continue;
        }
        optimal += 1;
        let spec = TrialSpec::new(3, 6, o.record.trial, 0).unwrap();
        let problem = TrialInstance::generate(&spec).unwrap().problem(o.record.method).unwrap();
        let z = o.zonotope.as_ref().unwrap();
        let sim = simulate_invariance(&problem.system, z, &problem.bounds, problem.horizon, 4096, o.record.seed).unwrap();
        worst = worst.max(sim.max_violation);
        if !check_invariance_certificate(&problem, z) || sim.max_violation > 1e-7 || !o.record.certified {
            failed += 1;
        }
    }
    verdict(
        failed == 0 && optimal > 0,
        format!(
            "(3,6): {optimal}/{} Optimal outputs, {failed} failing certificate or simulation, worst simulated violation {worst:.2e}",
            rows.len()
        ),
    )
}

type Means = BTreeMap<(usize, usize, Method), (f64, f64)>;

/// Mean volume over Optimal trials and mean runtime over all trials.
fn means(records: &[TrialRecord]) -> Means {
    let mut acc: BTreeMap<(usize, usize, Method), (f64, usize, f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry((r.d_x, r.p, r.method)).or_default();
        if let Some(v) = r.volume {
            e.0 += v;
            e.1 += 1;
        }
        e.2 += r.wall_time_s;
        e.3 += 1;
    }
    acc.into_iter()
        .map(|(k, (v, nv, t, nt))| (k, (v / nv as f64, t / nt as f64)))
        .collect()
}

fn trend_volumes(m: &Means) -> Verdict {
    let vol = |d, p, method| m[&(d, p, method)].0;
    let (u33, s33) = (vol(3, 3, Method::UtpdLgv), vol(3, 3, Method::SfgSs));
    let (l38, g38, u38) = (vol(3, 8, Method::SfgLgv), vol(3, 8, Method::SfgSlgs), vol(3, 8, Method::UtpdLgv));
    let (u1014, l1014) = (vol(10, 14, Method::UtpdLgv), vol(10, 14, Method::SfgLgv));
    let in_band = |v: f64| (5.5..=7.5).contains(&v);
    let checks = [
        u33 > s33,
        in_band(u33) && in_band(s33),
        l38 > g38,
        l38 >= 0.95 * u38,
        u1014 > l1014,
    ];
    verdict(
        checks.iter().all(|c| *c),
        format!(
            "(3,3) UTPD+lgv {u33:.3} > SFG+ss {s33:.3}: {}, both in [5.5,7.5]: {}; (3,8) SFG+lgv {l38:.3} > SFG+slgs {g38:.3}: {}, ≥ 0.95·UTPD+lgv {u38:.3}: {}; (10,14) UTPD+lgv {u1014:.3} > SFG+lgv {l1014:.3}: {}",
            checks[0], checks[1], checks[2], checks[3], checks[4]
        ),
    )
}

fn trend_runtimes(m: &Means, grid: &[(usize, usize)]) -> Verdict {
    let rt = |d, p, method| m[&(d, p, method)].1;
    let mut ok = true;
    let mut notes = Vec::new();
    for &(d, p) in grid {
        let (ss, slgs, lgv) = (rt(d, p, Method::SfgSs), rt(d, p, Method::SfgSlgs), rt(d, p, Method::SfgLgv));
        let ratio = ss.max(slgs) / ss.min(slgs);
        ok &= ratio <= 3.0;
        if binomial(p, d) >= 210 {
            let speedup = lgv / ss.max(slgs);
            ok &= speedup >= 5.0;
            notes.push(format!("({d},{p}) ss/slgs {ratio:.2}×, lgv/max(ss,slgs) {speedup:.2}× (need ≥5)"));
        } else {
            notes.push(format!("({d},{p}) ss/slgs {ratio:.2}×"));
        }
    }
    let utpd: Vec<f64> = [(6, 10), (10, 14), (15, 16)].iter().map(|&(d, p)| rt(d, p, Method::UtpdLgv)).collect();
    let monotone = utpd.windows(2).all(|w| w[1] > w[0]);
    ok &= monotone;
    notes.push(format!(
        "UTPD+lgv d=6,10,15: {:.3}s → {:.3}s → {:.3}s monotone: {monotone}",
        utpd[0], utpd[1], utpd[2]
    ));
    verdict(ok, notes.join("; "))
}

fn strip_wall_time(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = header.iter().position(|h| *h == "wall_time_s").expect("wall_time_s column");
    std::iter::once(header.clone())
        .chain(lines.map(|l| l.split(',').collect()))
        .map(|fields: Vec<&str>| {
            fields
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != col)
                .map(|(_, f)| *f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"grid": [{"d_x": 3, "p": 3, "trials": 10}, {"d_x": 3, "p": 6, "trials": 10},
        {"d_x": 6, "p": 10, "trials": 4}, {"d_x": 10, "p": 14, "trials": 2}], "master_seed": 17}"#;
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, config).unwrap();
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_zonoinv"))
            .args(["experiment", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()])
            .output()
            .unwrap();
        if !status.status.success() {
            return verdict(false, format!("experiment run failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        tables.push(strip_wall_time(&fs::read_to_string(out.join(TRIAL_CSV)).unwrap()));
    }
    let rows = tables[0].lines().count() - 1;
    verdict(
        tables[0] == tables[1],
        format!("{rows} trial rows; CSV without wall time identical: {}", tables[0] == tables[1]),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Verdict, f64)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {n} [{}] {name}: {} ({secs:.1}s)", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v, secs));
    };
    timed(1, "formula equivalence", &mut formula_equivalence);
    timed(2, "oracle agreement", &mut oracle_agreement);
    timed(3, "log-concavity", &mut log_concavity);
    timed(4, "derivative correctness", &mut derivatives);
    timed(5, "analytic optima", &mut analytic_optima);

    let config = ExperimentConfig::default();
    let grid: Vec<(usize, usize)> = config.grid.iter().map(|r| (r.dim, r.generators)).collect();
    let t = Instant::now();
    let batch = run_experiment(&config).expect("benchmark batch");
    println!(
        "benchmark batch: {} solves over {} grid rows in {:.1}s",
        batch.len(),
        grid.len(),
        t.elapsed().as_secs_f64()
    );
    let records: Vec<TrialRecord> = batch.iter().map(|o| o.record.clone()).collect();
    let m = means(&records);
    timed(6, "soundness", &mut || soundness(&batch));
    timed(7, "volume trends", &mut || trend_volumes(&m));
    timed(8, "runtime trends", &mut || trend_runtimes(&m, &grid));
    timed(9, "determinism", &mut determinism);

    let failed: Vec<String> = results.iter().filter(|r| !r.2.passed).map(|r| r.0.to_string()).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
