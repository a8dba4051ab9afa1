//! Subcommand bodies. Each returns the files to write and an exit code;
//! nothing here touches the filesystem.

use std::fmt::Write as _;

use lienard::analysis::{
    probe_points, seed_wo_points, verify_attraction, AttractionOptions, AttractionReport, ProbeOutcome, StratumRequest,
};
use lienard::hypotheses::{check_all, CheckOptions, HypothesisReport, IsolationVerdict, RootOptions, Verdict};
use lienard::integrate::{integrate, IntegratorOptions, Termination};
use lienard::lyapunov::LyapunovData;
use lienard::model::LinearizationFlag;
use lienard::periodic::{continuation, PeriodicError, ShootOptions, Trend};
use lienard::{Interval, LienardSystem, State};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg::{marching_squares, Portrait, Window};

pub struct CommandOutput {
    pub command: &'static str,
    pub exit_code: i32,
    /// Plain-language paragraph printed to stdout and saved as `<command>.txt`.
    pub summary: String,
    /// `(file name, contents)` pairs written under the output directory.
    pub files: Vec<(String, String)>,
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    system: &'a str,
    seed: u64,
    exit_code: i32,
    summary: &'a str,
    report: &'a T,
}

fn finish<T: Serialize>(
    command: &'static str,
    cfg: &RunConfig,
    sys: &LienardSystem,
    exit_code: i32,
    summary: String,
    report: &T,
    mut files: Vec<(String, String)>,
) -> CommandOutput {
    let record = Record {
        command,
        version: env!("CARGO_PKG_VERSION"),
        system: &sys.name,
        seed: cfg.seed,
        exit_code,
        summary: &summary,
        report,
    };
    let mut json = serde_json::to_string_pretty(&record).expect("report serializes");
    json.push('\n');
    files.insert(0, (format!("{command}.json"), json));
    files.push((format!("{command}.txt"), format!("{summary}\n")));
    CommandOutput {
        command,
        exit_code,
        summary,
        files,
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p
        .iter()
        .map(|v| {
            let s = format!("{v:.6}");
            match s.strip_prefix('-') {
                Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
                _ => s,
            }
        })
        .collect();
    format!("({})", parts.join(", "))
}

fn integrator_options(cfg: &RunConfig) -> IntegratorOptions {
    IntegratorOptions::with_tolerances(cfg.integrator.rel_tol, cfg.integrator.abs_tol)
}

pub fn cmd_check(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sys = cfg.build_system()?;
    let opts = CheckOptions {
        grid_density: cfg.check.grid_density,
        roots: RootOptions::default(),
    };
    let report = check_all(&sys, &opts).map_err(|e| CliError::Check(e.to_string()))?;
    let exit_code = match report.verdict {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    };
    let summary = check_summary(&report);
    Ok(finish("check", cfg, &sys, exit_code, summary, &report, Vec::new()))
}

fn check_summary(r: &HypothesisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "System {}: hypothesis check {}.", r.system, r.verdict);
    let part = |pass: bool| if pass { "PASS" } else { "FAIL" };
    let _ = write!(s, "  h1 (x g_i(x) > 0 off the origin): {}", part(r.h1.pass));
    if let Some(w) = &r.h1.witness {
        let _ = write!(s, ", g{}({}) = {:e}", w.axis, w.x, w.g);
    }
    let _ = write!(s, "\n  h2 (f_i >= 0 on the damping box): {}", part(r.h2.pass));
    if let Some(w) = &r.h2.witness {
        let _ = write!(s, ", f{} = {:e} at {}", w.index, w.value, fmt_point(&w.x));
    }
    let _ = write!(s, "\n  h3 (mixed constraint sets isolated): {}\n  h4 (common zeros of f isolated): {}", r.h3, r.h4);
    for sub in &r.subsets {
        let _ = write!(s, "\n  {}: {} root(s), {}", sub.label, sub.roots.len(), sub.verdict);
        if sub.budget_exhausted {
            s.push_str(" (search budget exhausted)");
        }
        if sub.verdict == IsolationVerdict::SuspectedContinuum {
            if let Some(w) = sub.roots.iter().find(|x| x.verdict() == IsolationVerdict::SuspectedContinuum) {
                let _ = write!(s, "; zeros accumulate at {}", fmt_point(&w.point));
            }
        } else if sub.roots.len() <= 8 {
            let pts: Vec<String> = sub.roots.iter().map(|x| fmt_point(&x.point)).collect();
            let _ = write!(s, " {}", pts.join(" "));
        }
    }
    let _ = write!(
        s,
        "\n{}",
        match r.verdict {
            Verdict::Pass => "All four conditions of the asymptotic-stability theorem hold numerically, so the origin is asymptotically stable for this system.",
            Verdict::Fail => "At least one condition of the asymptotic-stability theorem fails, so the theorem does not apply (stability is not disproved).",
            Verdict::Inconclusive => "The isolation conditions could not be settled within the search budget; the theorem's applicability is undecided.",
        }
    );
    s
}

#[derive(Serialize)]
struct SimulateReport {
    z0: Vec<f64>,
    t_end: f64,
    termination: Termination,
    points: usize,
    final_state: Vec<f64>,
    final_norm: f64,
    initial_v: f64,
    final_v: f64,
    max_v_increase: f64,
    accepted_steps: usize,
    rejected_steps: usize,
    stiffness_suspected: bool,
    plot_axes: [String; 2],
    contour_levels: Vec<f64>,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sys = cfg.build_system()?;
    let n = sys.n;
    let z0 = if cfg.simulate.z0.is_empty() {
        let mut z = vec![0.5; n];
        z.extend(vec![0.0; n]);
        z
    } else if cfg.simulate.z0.len() == 2 * n {
        cfg.simulate.z0.clone()
    } else {
        return Err(CliError::Config(format!(
            "simulate.z0 needs {} values (x1..x{n}, y1..y{n}), got {}",
            2 * n,
            cfg.simulate.z0.len()
        )));
    };
    let (a, b) = cfg.plot_axes(n)?;
    let mut opts = integrator_options(cfg);
    opts.convergence_radius = Some(cfg.simulate.convergence_radius);
    let traj = integrate(&sys, &State::from_flat(&z0), (0.0, cfg.simulate.t_max), &opts)
        .map_err(|e| CliError::Integration(e.to_string()))?;

    let points: Vec<(f64, f64)> = traj.states.iter().map(|z| (z[a], z[b])).collect();
    let window = Window::around(&points);
    let mut contours = Vec::new();
    if n == 2 {
        let ld = LyapunovData::new(&sys).map_err(|e| CliError::Integration(e.to_string()))?;
        let slice = |u: f64, v: f64| {
            let mut z = vec![0.0; 2 * n];
            z[a] = u;
            z[b] = v;
            let st = State::from_flat(&z);
            if sys.in_domain(&st.x) {
                ld.v(&st).unwrap_or(f64::NAN)
            } else {
                f64::NAN
            }
        };
        let v0 = traj.v[0];
        for level in [v0, v0 / 4.0, v0 / 16.0] {
            if level > 0.0 && level.is_finite() {
                contours.push((level, marching_squares(slice, window, 121, level)));
            }
        }
    }
    let labels = (cfg.simulate.plot[0].as_str(), cfg.simulate.plot[1].as_str());
    let title = format!("{}: {} vs {}", sys.name, labels.1, labels.0);
    let svg = Portrait {
        title: &title,
        labels,
        points: &points,
        window,
        contours: &contours,
    }
    .render();

    let last = traj.states.last().expect("trajectory has a start point").clone();
    let report = SimulateReport {
        z0,
        t_end: traj.end(),
        termination: traj.termination,
        points: traj.len(),
        final_norm: lienard::State::from_flat(&last).norm(),
        final_state: last,
        initial_v: traj.v[0],
        final_v: *traj.v.last().unwrap(),
        max_v_increase: traj.max_v_increase(),
        accepted_steps: traj.stats.accepted,
        rejected_steps: traj.stats.rejected,
        stiffness_suspected: traj.stats.stiffness_suspected,
        plot_axes: cfg.simulate.plot.clone(),
        contour_levels: contours.iter().map(|c| c.0).collect(),
    };
    let failed = matches!(
        traj.termination,
        Termination::LeftDomain | Termination::StepUnderflow | Termination::MaxSteps
    );
    let mut summary = format!(
        "Integrated {} from {} to t = {} ({:?}, {} points). Final |z| = {:.3e}, V went from {:.6e} to {:.6e}; largest step-to-step increase of V was {:.1e}.",
        sys.name,
        fmt_point(&report.z0),
        report.t_end,
        report.termination,
        report.points,
        report.final_norm,
        report.initial_v,
        report.final_v,
        report.max_v_increase
    );
    if failed {
        summary.push_str(" The integration stopped before t_max; the CSV holds the partial trajectory.");
    }
    let files = vec![
        ("trajectory.csv".to_string(), traj.to_csv(&sys.name)),
        ("phase.svg".to_string(), svg),
    ];
    Ok(finish("simulate", cfg, &sys, if failed { 3 } else { 0 }, summary, &report, files))
}

pub fn cmd_roa(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sys = cfg.build_system()?;
    let n = sys.n;
    let bounds: Vec<Interval> = if cfg.roa.bounds.is_empty() {
        let pos: Vec<Interval> = sys
            .omega_box
            .iter()
            .zip(&sys.xdomain)
            .map(|(o, d)| {
                let shrink = 1.0 - 1e-9;
                Interval::new(o.lo.max(d.lo * shrink), o.hi.min(d.hi * shrink))
            })
            .collect();
        let vel: Vec<Interval> = pos.iter().map(|b| Interval::symmetric(b.lo.abs().min(b.hi))).collect();
        pos.into_iter().chain(vel).collect()
    } else {
        cfg.roa.bounds.iter().map(|[lo, hi]| Interval::new(*lo, *hi)).collect()
    };
    let ld = LyapunovData::new(&sys).map_err(|e| CliError::Roa(e.to_string()))?;
    let report = ld
        .estimate_roa_level(&bounds, cfg.roa.resolution)
        .map_err(|e| CliError::Roa(e.to_string()))?;
    let summary = if report.certified {
        format!(
            "On a {}^{} grid the sublevel component {{V < {:.6e}}} around the origin stays inside the box with V' <= 0 at every node (worst V' = {:.3e}). With the hypothesis check passing, the invariance argument makes this set an estimate of the region of attraction.",
            report.resolution,
            2 * n,
            report.level,
            report.worst_vdot
        )
    } else {
        format!(
            "No sublevel level could be certified on the {}^{} grid after {} tries; the region-of-attraction estimate is empty.",
            report.resolution,
            2 * n,
            report.levels_tried
        )
    };
    let exit_code = if report.certified { 0 } else { 4 };
    Ok(finish("roa", cfg, &sys, exit_code, summary, &report, Vec::new()))
}

pub fn cmd_eigen(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sys = cfg.build_system()?;
    let lin = sys.linearization_eigenvalues().map_err(|e| CliError::Eigen(e.to_string()))?;
    let fmt_c = |c: &Complex64| {
        let re = if c.re == 0.0 { 0.0 } else { c.re };
        let im = if c.im == 0.0 { 0.0 } else { c.im };
        if im >= 0.0 {
            format!("{re:.6} + {im:.6}i")
        } else {
            format!("{re:.6} - {:.6}i", -im)
        }
    };
    let eig: Vec<String> = lin.eigenvalues.iter().map(fmt_c).collect();
    let verdict = match lin.flag {
        LinearizationFlag::Clear => {
            if lin.eigenvalues.iter().all(|c| c.re < 0.0) {
                "every eigenvalue has negative real part, so the linearization alone shows asymptotic stability"
            } else {
                "some eigenvalue has positive real part"
            }
        }
        LinearizationFlag::Inconclusive => "linearization inconclusive; use check",
        LinearizationFlag::Degenerate => "linearization degenerate (prod g_i'(0) = 0); use check",
    };
    let mut summary = format!(
        "Eigenvalues (-f_i(0) +- sqrt(f_i(0)^2 - 4 g_i'(0)))/2 of the linearization at the origin: {}. Flag: {}: {}.",
        eig.join(", "),
        lin.flag,
        verdict
    );
    for w in &lin.warnings {
        let _ = write!(summary, " Warning: {w}.");
    }
    Ok(finish("eigen", cfg, &sys, 0, summary, &lin, Vec::new()))
}

#[derive(Serialize)]
struct StratumBlock {
    request: String,
    requested: usize,
    placed: usize,
    note: Option<String>,
    outcomes: Vec<ProbeOutcome>,
}

#[derive(Serialize)]
struct ProbeReport {
    horizon: f64,
    threshold: f64,
    total: usize,
    left: usize,
    max_leave_time: Option<f64>,
    strata: Vec<StratumBlock>,
}

fn stratum_requests(cfg: &RunConfig, n: usize) -> Result<Vec<(String, StratumRequest)>, CliError> {
    let subset = if cfg.probe.subset.is_empty() {
        None
    } else {
        let mut mask = 0u32;
        for &i in &cfg.probe.subset {
            if i == 0 || i > n {
                return Err(CliError::Config(format!("probe.subset: index {i} outside 1..={n}")));
            }
            mask |= 1 << (i - 1);
        }
        Some(mask)
    };
    let one = |name: &str| -> Result<(String, StratumRequest), CliError> {
        Ok((
            name.to_string(),
            match name {
                "case_a" => StratumRequest::CaseA,
                "case_b" => StratumRequest::CaseB(subset),
                "case_c" => StratumRequest::CaseC,
                other => return Err(CliError::Config(format!("probe.stratum: unknown stratum {other:?}"))),
            },
        ))
    };
    match cfg.probe.stratum.as_str() {
        "all" => ["case_a", "case_b", "case_c"].iter().map(|s| one(s)).collect(),
        s => Ok(vec![one(s)?]),
    }
}

pub fn cmd_probe(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sys = cfg.build_system()?;
    let requests = stratum_requests(cfg, sys.n)?;
    let mut strata = Vec::new();
    for (k, (name, req)) in requests.into_iter().enumerate() {
        let seeding = seed_wo_points(&sys, cfg.probe.count, req, cfg.seed.wrapping_add(k as u64))
            .map_err(|e| CliError::Probe(e.to_string()))?;
        let outcomes = probe_points(&sys, &seeding.points, cfg.probe.horizon, cfg.probe.threshold)
            .map_err(|e| CliError::Probe(e.to_string()))?;
        strata.push(StratumBlock {
            request: name,
            requested: cfg.probe.count,
            placed: seeding.points.len(),
            note: seeding.note,
            outcomes,
        });
    }
    let all: Vec<&ProbeOutcome> = strata.iter().flat_map(|s| &s.outcomes).collect();
    let left = all.iter().filter(|o| o.left()).count();
    let report = ProbeReport {
        horizon: cfg.probe.horizon,
        threshold: cfg.probe.threshold,
        total: all.len(),
        left,
        max_leave_time: all.iter().filter_map(|o| o.leave_time).reduce(f64::max),
        strata,
    };
    let mut summary = format!(
        "Seeded {} point(s) on W_O = {{sum y_i^2 f_i = 0}}; {} left it (V' < -{:e}) within t <= {}",
        report.total, report.left, report.threshold, report.horizon
    );
    if let Some(t) = report.max_leave_time {
        let _ = write!(summary, ", the slowest after t = {t:.3e}");
    }
    summary.push('.');
    for s in &report.strata {
        let _ = write!(summary, " {}: {}/{} placed", s.request, s.placed, s.requested);
        if let Some(note) = &s.note {
            let _ = write!(summary, " ({note})");
        }
        summary.push('.');
    }
    summary.push_str(if report.left == report.total {
        " No seeded orbit stays in W_O, the numerical counterpart of the invariance step in the stability proof."
    } else {
        " Some orbit stayed in W_O over the horizon: either a hypothesis fails or the tolerances are too loose."
    });
    let exit_code = if report.left == report.total { 0 } else { 6 };
    Ok(finish("probe", cfg, &sys, exit_code, summary, &report, Vec::new()))
}

#[derive(Serialize)]
struct AttractRecord {
    hypotheses: Verdict,
    warning: Option<String>,
    attraction: AttractionReport,
}

pub fn cmd_attract(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sys = cfg.build_system()?;
    let verdict = match check_all(
        &sys,
        &CheckOptions {
            grid_density: cfg.check.grid_density,
            roots: RootOptions::default(),
        },
    ) {
        Ok(r) => r.verdict,
        Err(_) => Verdict::Inconclusive,
    };
    let warning = (verdict != Verdict::Pass).then(|| format!("hypothesis check is {verdict}; attraction is not guaranteed"));
    if warning.is_some() && !cfg.attract.allow_failed_check {
        return Err(CliError::Probe(format!(
            "hypothesis check is {verdict}; set attract.allow_failed_check to run anyway"
        )));
    }
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let opts = AttractionOptions {
        seed: cfg.seed,
        convergence_radius: cfg.attract.convergence_radius,
        rel_tol: cfg.integrator.rel_tol,
        abs_tol: cfg.integrator.abs_tol,
    };
    let report = verify_attraction(&sys, cfg.attract.level, cfg.attract.samples, cfg.attract.t_max, &opts)
        .map_err(|e| CliError::Probe(e.to_string()))?;
    let summary = format!(
        "{} of {} samples drawn from {{V < {}}} reached |z| < {:e} by t = {} (largest terminal |z| {:.3e}, largest V increase {:.1e}). {}",
        report.converged_count,
        report.sample_count,
        report.c_level,
        report.convergence_radius,
        report.t_max,
        report.slowest.map_or(0.0, |i| report.samples[i].terminal_norm),
        report.max_v_increase,
        if report.converged_count == report.sample_count {
            "This is consistent with asymptotic stability of the origin on the sampled sublevel set."
        } else {
            "Not every sample converged within the time budget."
        }
    );
    let record = AttractRecord {
        hypotheses: verdict,
        warning,
        attraction: report,
    };
    let exit_code = if record.attraction.converged_count == record.attraction.sample_count {
        0
    } else {
        6
    };
    Ok(finish("attract", cfg, &sys, exit_code, summary, &record, Vec::new()))
}

#[derive(Serialize)]
struct OrbitSummary {
    eps: f64,
    period: f64,
    initial_state: Vec<f64>,
    residual: f64,
    newton_iterations: usize,
    amplitude: f64,
    component_amplitudes: Vec<f64>,
    multipliers: Vec<Complex64>,
    multiplier_moduli: Vec<f64>,
    samples_file: String,
}

#[derive(Serialize)]
struct PeriodicRecord {
    eps_list: Vec<f64>,
    forcing: Vec<String>,
    orbits: Vec<OrbitSummary>,
    trend: Trend,
    strictly_decreasing: bool,
    ratio_spread: Option<f64>,
    largest_converged_eps: Option<f64>,
    failure: Option<String>,
}

pub fn cmd_periodic(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sys = cfg.build_system()?;
    let n = sys.n;
    let pert = cfg.perturbation(n)?;
    let guess = if cfg.periodic.guess.is_empty() {
        State::origin(n)
    } else if cfg.periodic.guess.len() == 2 * n {
        State::from_flat(&cfg.periodic.guess)
    } else {
        return Err(CliError::Config(format!("periodic.guess needs {} values", 2 * n)));
    };
    let report = continuation(&sys, &pert, &cfg.periodic.eps, &guess, &ShootOptions::default())
        .map_err(|e| match e {
            PeriodicError::EpsList => CliError::Config(format!("periodic.eps: {e}")),
            e => CliError::Periodic(e.to_string()),
        })?;
    let mut files = Vec::new();
    let mut orbits = Vec::new();
    for (k, o) in report.orbits.iter().enumerate() {
        let name = format!("orbit_{k}.csv");
        files.push((name.clone(), o.to_csv()));
        orbits.push(OrbitSummary {
            eps: o.eps,
            period: o.period,
            initial_state: o.initial_state.clone(),
            residual: o.residual,
            newton_iterations: o.newton_iterations,
            amplitude: o.amplitude,
            component_amplitudes: o.component_amplitudes.clone(),
            multipliers: o.multipliers.clone(),
            multiplier_moduli: o.multiplier_moduli.clone(),
            samples_file: name,
        });
    }
    let record = PeriodicRecord {
        eps_list: report.eps_list.clone(),
        forcing: pert.h.iter().map(|h| h.to_string()).collect(),
        orbits,
        trend: report.trend,
        strictly_decreasing: report.strictly_decreasing,
        ratio_spread: report.ratio_spread,
        largest_converged_eps: report.largest_converged_eps,
        failure: report.failure.clone(),
    };
    let mut summary = String::new();
    let _ = write!(
        summary,
        "Shooting on the period map (T = {}) converged for {} of {} eps values.",
        pert.period,
        report.orbits.len(),
        report.eps_list.len()
    );
    for o in &report.orbits {
        let _ = write!(
            summary,
            " eps = {}: amplitude {:.4e}, residual {:.1e}, max |multiplier| {}.",
            o.eps,
            o.amplitude,
            o.residual,
            o.max_multiplier_modulus().map_or("n/a".to_string(), |m| format!("{m:.6}"))
        );
    }
    let _ = write!(summary, " Trend: {}.", report.trend);
    if report.trend == Trend::Pass {
        summary.push_str(
            " Amplitudes shrink in proportion to eps, as expected for small periodic forcing of an asymptotically stable origin (they tend to the null solution).",
        );
    }
    if let Some(f) = &report.failure {
        let _ = write!(summary, " Stopped early: {f}.");
    }
    if let Some(e) = report.largest_converged_eps {
        let _ = write!(summary, " Largest eps with a converged orbit: {e}.");
    }
    let exit_code = if report.failure.is_some() { 7 } else { 0 };
    Ok(finish("periodic", cfg, &sys, exit_code, summary, &record, files))
}
