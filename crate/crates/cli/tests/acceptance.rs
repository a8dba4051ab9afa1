//! One line per acceptance criterion; exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use lienard::analysis::{probe_points, seed_wo_points, verify_attraction, AttractionOptions, StratumRequest};
use lienard::hypotheses::{check_all, solve_constraint_set, CheckOptions, IsolationVerdict, RootOptions, Verdict};
use lienard::integrate::{integrate, IntegratorOptions};
use lienard::lyapunov::LyapunovData;
use lienard::model::LinearizationFlag;
use lienard::periodic::{continuation, ShootOptions};
use lienard::{LienardSystem, Perturbation, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_lienard");

/// `Ok(detail)` passes, `Err(detail)` fails.
type Outcome = Result<String, String>;

fn builtin(name: &str) -> LienardSystem {
    LienardSystem::builtin(name).unwrap()
}

fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let one_way = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter()
            .map(|p| b.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Root sets for `(mask, reference)` pairs: distance below 1e-6, all
/// isolated, each subset within `budget` seconds.
fn root_sets(name: &str, cases: &[(u32, Vec<Vec<f64>>)], budget: Option<f64>) -> Outcome {
    let sys = builtin(name);
    let mut parts = Vec::new();
    let mut ok = true;
    for (mask, reference) in cases {
        let start = Instant::now();
        let r = solve_constraint_set(&sys, *mask, &sys.omega_box, &RootOptions::default()).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let got: Vec<Vec<f64>> = r.roots.iter().map(|p| p.point.clone()).collect();
        let dist = hausdorff(&got, reference);
        let isolated = r.verdict == IsolationVerdict::Isolated
            && r.roots.iter().all(|p| p.verdict() == IsolationVerdict::Isolated);
        let fast = budget.is_none_or(|b| secs < b);
        ok &= got.len() == reference.len() && dist < 1e-6 && isolated && fast;
        parts.push(format!("{} {} roots dH={dist:.1e} {:?} {secs:.2}s", r.label, got.len(), r.verdict));
    }
    let detail = format!("{name}: {}", parts.join("; "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_01() -> Outcome {
    let cases = vec![
        (0, vec![vec![0.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0], vec![-1.0, 0.0], vec![-1.0, -1.0]]),
        (0b10, vec![vec![0.0, 0.0], vec![-1.0, 0.0]]),
        (0b01, vec![vec![0.0, 0.0], vec![0.0, -1.0]]),
    ];
    root_sets("squares", &cases, Some(10.0))
}

fn criterion_02() -> Outcome {
    let s = 3f64.sqrt().recip();
    let cases = vec![
        (0, vec![vec![s, s], vec![s, -s], vec![-s, s], vec![-s, -s]]),
        (0b10, vec![vec![1.0, 0.0], vec![-1.0, 0.0]]),
        (0b01, vec![vec![0.0, 1.0], vec![0.0, -1.0]]),
    ];
    root_sets("ellipses", &cases, None)
}

fn run_cli(out: &Path, args: &[&str]) -> Option<i32> {
    Command::new(BIN).args(args).arg("--out").arg(out).output().ok()?.status.code()
}

fn criterion_03() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["intro", "squares", "ellipses"] {
        let code = run_cli(dir.path(), &["check", "--system", name]);
        ok &= code == Some(0);
        parts.push(format!("{name} exit {code:?}"));
    }
    let circle = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/circle.toml");
    let code = run_cli(dir.path(), &["check", "--config", circle.to_str().unwrap()]);
    let text = std::fs::read_to_string(dir.path().join("check.json")).unwrap_or_default();
    let witness = text.contains("\"suspected_continuum\"");
    ok &= code == Some(1) && witness;
    parts.push(format!("circle exit {code:?} suspected_continuum witness {witness}"));
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_04() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, level) in [("squares", 1.0), ("ellipses", 0.25)] {
        let r = verify_attraction(&builtin(name), level, 100, 500.0, &AttractionOptions::default())
            .map_err(|e| e.to_string())?;
        let monotone = r.samples.iter().all(|s| s.max_v_increase <= 1e-8);
        let worst = r.samples.iter().map(|s| s.terminal_norm).fold(0.0, f64::max);
        ok &= monotone && r.converged_count == 100;
        parts.push(format!(
            "{name} V<{level}: {}/100 reach |z|<1e-3 by t=500 (worst |z| {worst:.2e}), max V increase {:.1e}",
            r.converged_count, r.max_v_increase
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    let detail = format!("{}; {secs:.1}s", parts.join("; "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_05() -> Outcome {
    let sys = builtin("oscillator");
    let ld = LyapunovData::new(&sys).map_err(|e| e.to_string())?;
    let z0 = State::new(vec![1.0, -0.5], vec![0.3, 0.8]);
    let opts = IntegratorOptions::with_tolerances(1e-10, 1e-12);
    let tr = integrate(&sys, &z0, (0.0, 100.0), &opts).map_err(|e| e.to_string())?;
    let v0 = ld.v(&z0).map_err(|e| e.to_string())?;
    let drift = tr.v.iter().map(|v| (v - v0).abs()).fold(0.0, f64::max);
    let detail = format!("max |V(t) - V(0)| = {drift:.2e} over {} samples to t = {}", tr.len(), tr.end());
    if drift < 1e-7 && tr.end() == 100.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_06() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_rel: f64 = 0.0;
    for name in ["intro", "squares", "ellipses", "cubic"] {
        let sys = builtin(name);
        let ld = LyapunovData::new(&sys).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let z = State::new(
                (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            );
            let field = sys.vector_field(&z).map_err(|e| e.to_string())?;
            let g = sys.restoring(&z.x).map_err(|e| e.to_string())?;
            // grad V = (g(x), y); the relative error is measured against the
            // size of the individual terms of the dot product.
            let terms: Vec<f64> = (0..2).flat_map(|i| [g[i] * field[i], z.y[i] * field[2 + i]]).collect();
            let dot: f64 = terms.iter().sum();
            let scale = terms.iter().map(|t| t.abs()).sum::<f64>().max(1e-300);
            let vdot = ld.vdot(&z).map_err(|e| e.to_string())?;
            worst_rel = worst_rel.max((dot - vdot).abs() / scale);
        }
    }
    let sys = builtin("ellipses");
    let ld = LyapunovData::new(&sys).map_err(|e| e.to_string())?;
    let tr = integrate(&sys, &State::new(vec![0.4, -0.3], vec![0.2, 0.5]), (0.0, 20.0), &IntegratorOptions::default())
        .map_err(|e| e.to_string())?;
    let h = 1e-4;
    let mut worst_fd: f64 = 0.0;
    for k in 0..200 {
        let t = 0.1 + 19.8 * k as f64 / 199.0;
        let at = |s: f64| tr.sample_dense(s).map_err(|e| e.to_string());
        let vdot = ld.vdot(&at(t)?).map_err(|e| e.to_string())?;
        if vdot.abs() < 1e-6 {
            continue;
        }
        let fd = (ld.v(&at(t + h)?).unwrap() - ld.v(&at(t - h)?).unwrap()) / (2.0 * h);
        worst_fd = worst_fd.max((fd - vdot).abs() / vdot.abs());
    }
    let detail = format!("4000 states worst relative error {worst_rel:.1e}; trajectory central difference worst {worst_fd:.1e}");
    if worst_rel <= 1e-10 && worst_fd <= 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_07() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["squares", "ellipses"] {
        let sys = builtin(name);
        for (label, request) in [
            ("a", StratumRequest::CaseA),
            ("b", StratumRequest::CaseB(None)),
            ("c", StratumRequest::CaseC),
        ] {
            let seeding = seed_wo_points(&sys, 20, request, 7).map_err(|e| e.to_string())?;
            let outcomes = probe_points(&sys, &seeding.points, 1.0, 1e-10).map_err(|e| e.to_string())?;
            let left = outcomes
                .iter()
                .filter(|o| o.leave_time.is_some_and(|t| t <= 1.0) && o.vdot_at_leave.is_some_and(|v| v < -1e-10))
                .count();
            let slowest = outcomes.iter().filter_map(|o| o.leave_time).fold(0.0, f64::max);
            let origin_free = seeding.points.iter().all(|p| p.state.norm() > 0.0);
            ok &= seeding.points.len() >= 20 && left == outcomes.len() && origin_free;
            parts.push(format!("{name}/{label} {left}/{} left by t={slowest:.2e}", seeding.points.len()));
        }
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_08() -> Outcome {
    let sys = builtin("cubic");
    let lin = sys.linearization_eigenvalues().map_err(|e| e.to_string())?;
    let check = check_all(&sys, &CheckOptions::default()).map_err(|e| e.to_string())?;
    let r = verify_attraction(&sys, 0.1, 100, 2000.0, &AttractionOptions::default()).map_err(|e| e.to_string())?;
    let worst = r.samples.iter().map(|s| s.terminal_norm).fold(0.0, f64::max);
    let detail = format!(
        "flag {}, check {}, {}/100 reach |z|<1e-3 by t=2000 (worst |z| {worst:.2e})",
        lin.flag, check.verdict, r.converged_count
    );
    if lin.flag == LinearizationFlag::Degenerate && check.verdict == Verdict::Pass && r.converged_count == 100 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_09() -> Outcome {
    let start = Instant::now();
    let sys = builtin("squares");
    let pert = Perturbation::cosine(PI, &[1.0, 0.0], &[0.0, 0.0]).map_err(|e| e.to_string())?;
    let eps = [0.2, 0.1, 0.05, 0.025];
    let r = continuation(&sys, &pert, &eps, &State::origin(2), &ShootOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let converged = r.completed() && r.orbits.len() == eps.len() && r.orbits.iter().all(|o| o.residual < 1e-9);
    let worst_residual = r.orbits.iter().map(|o| o.residual).fold(0.0, f64::max);
    let x1 = r.orbits.iter().find(|o| o.eps == 0.05).map(|o| o.component_amplitudes[0]);
    let linear = x1.is_some_and(|a| (a - 0.05 / 3.0).abs() <= 0.2 * 0.05 / 3.0);
    let max_modulus = r.orbits.iter().filter_map(|o| o.max_multiplier_modulus()).fold(0.0, f64::max);
    let stable = r.orbits.iter().all(|o| o.max_multiplier_modulus().is_some_and(|m| m < 1.0));
    let detail = format!(
        "{}/4 converged (worst residual {worst_residual:.1e}), strictly decreasing {}, x1 amplitude at eps=0.05 {:.5} (oracle 0.01667), max multiplier modulus {max_modulus:.12}, {secs:.2}s",
        r.orbits.len(),
        r.strictly_decreasing,
        x1.unwrap_or(f64::NAN)
    );
    if converged && r.strictly_decreasing && linear && stable && secs < 120.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let commands: [&[&str]; 7] = [
        &["check", "--system", "squares"],
        &["simulate", "--system", "squares", "--t-max", "50"],
        &["roa", "--system", "ellipses"],
        &["eigen", "--system", "cubic"],
        &["probe", "--system", "squares", "--seed", "3"],
        &["attract", "--system", "ellipses", "--level", "0.25", "--samples", "20", "--seed", "5"],
        &["periodic", "--system", "squares"],
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for args in commands {
        let a = dir.path().join(format!("{}-a", args[0]));
        let b = dir.path().join(format!("{}-b", args[0]));
        run_cli(&a, args);
        run_cli(&b, args);
        let mut names: Vec<_> = std::fs::read_dir(&a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
        names.sort();
        if names.is_empty() {
            differing.push(format!("{}: no outputs", args[0]));
        }
        for name in names {
            compared += 1;
            if std::fs::read(a.join(&name)).ok() != std::fs::read(b.join(&name)).ok() {
                differing.push(format!("{}/{}", args[0], name.to_string_lossy()));
            }
        }
    }
    let detail = format!("7 subcommands, {compared} files compared, {} differ", differing.len());
    if differing.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}: {}", differing.join(", ")))
    }
}

fn main() {
    let criteria: [fn() -> Outcome; 10] = [
        criterion_01,
        criterion_02,
        criterion_03,
        criterion_04,
        criterion_05,
        criterion_06,
        criterion_07,
        criterion_08,
        criterion_09,
        criterion_10,
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (k, criterion) in criteria.iter().enumerate() {
        let number = k + 1;
        if !filter.is_empty() && !filter.contains(&number) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("[acceptance] criterion {number} PASS: {detail}"),
            Err(detail) => {
                println!("[acceptance] criterion {number} FAIL: {detail}");
                failed.push(number);
            }
        }
    }
    if failed.is_empty() {
        println!("[acceptance] all criteria passed");
    } else {
        println!("[acceptance] failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
