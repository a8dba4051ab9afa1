//! Numerical side of the invariance argument. Points are seeded on the
//! strata of `W_O = {sum y_i^2 f_i(X) = 0}` and integrated until the energy
//! strictly decreases; attraction is checked on seeded ensembles inside a
//! sublevel set of `V`.
//!
//! Strata: `case_a` has every `y_i = 0`; `case_b(S)` has `y_i = 0` for
//! `i in S` and `f_j = 0` for `j not in S`; `case_c` has every `f_i = 0`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hypotheses::{solve_constraint_set, subset_members, ConstraintSet, HypothesisError, RootOptions};
use crate::integrate::{integrate, IntegrateError, IntegratorOptions, Termination, Trajectory};
use crate::lyapunov::{LyapunovData, LyapunovError};
use crate::model::{norm, LienardSystem, State};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("the origin is the invariant point of W_O and cannot be probed")]
    OriginPoint,
    #[error("subset mask {mask:#b} is not a proper nonempty subset of 1..={n}")]
    BadSubset { mask: u32, n: usize },
    #[error("could not draw {wanted} samples from {{V < {level}}} (got {got})")]
    Sampling { wanted: usize, got: usize, level: f64 },
    #[error("sublevel value must be positive and finite, got {0}")]
    Level(f64),
    #[error(transparent)]
    Hypothesis(#[from] HypothesisError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum Stratum {
    CaseA,
    /// One-based members of `S`.
    CaseB { subset: Vec<usize> },
    CaseC,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::CaseA => f.write_str("case_a"),
            Stratum::CaseB { subset } => {
                let s: Vec<String> = subset.iter().map(|i| i.to_string()).collect();
                write!(f, "case_b({{{}}})", s.join(","))
            }
            Stratum::CaseC => f.write_str("case_c"),
        }
    }
}

/// Which stratum to seed. `CaseB(None)` cycles through every proper
/// nonempty subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratumRequest {
    CaseA,
    CaseB(Option<u32>),
    CaseC,
}

#[derive(Debug, Clone, Serialize)]
pub struct WOPoint {
    pub state: State,
    pub stratum: Stratum,
    pub vdot: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeding {
    pub points: Vec<WOPoint>,
    /// Why fewer points than requested were produced, if so.
    pub note: Option<String>,
}

const WO_TOL: f64 = 1e-10;
const CONSTRAINT_TOL: f64 = 1e-12;

fn sample_box(sys: &LienardSystem) -> Vec<(f64, f64)> {
    sys.omega_box
        .iter()
        .zip(&sys.xdomain)
        .map(|(o, d)| {
            let lo = o.lo.max(d.lo).max(-2.0) * 0.5;
            let hi = o.hi.min(d.hi).min(2.0) * 0.5;
            (lo, hi)
        })
        .collect()
}

fn velocity(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.gen_range(0.1..=1.0);
    if rng.gen::<bool>() {
        m
    } else {
        -m
    }
}

fn make_point(ld: &LyapunovData, x: Vec<f64>, y: Vec<f64>, stratum: &Stratum) -> Option<WOPoint> {
    let state = State::new(x, y);
    if state.norm() == 0.0 || !ld.system().in_domain(&state.x) {
        return None;
    }
    let vdot = ld.vdot(&state).ok()?;
    (vdot.abs() < WO_TOL).then(|| WOPoint {
        state,
        stratum: stratum.clone(),
        vdot,
    })
}

/// Seed `count` points on the requested stratum. Positions on `f`-zero
/// loci come from recovered constraint roots and from projecting random
/// positions onto the zero set; free velocities have `|y| in [0.1, 1]`.
pub fn seed_wo_points(
    sys: &LienardSystem,
    count: usize,
    request: StratumRequest,
    seed: u64,
) -> Result<Seeding, AnalysisError> {
    let ld = LyapunovData::new(sys)?;
    let n = sys.n;
    let full = (1u32 << n) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = sample_box(sys);
    let mut points = Vec::with_capacity(count);

    match request {
        StratumRequest::CaseA => {
            let mut attempts = 0;
            while points.len() < count && attempts < 100 * count.max(1) {
                attempts += 1;
                let x: Vec<f64> = bx.iter().map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect();
                if let Some(p) = make_point(&ld, x, vec![0.0; n], &Stratum::CaseA) {
                    points.push(p);
                }
            }
        }
        StratumRequest::CaseC => {
            let roots = solve_constraint_set(sys, 0, &sys.omega_box, &RootOptions::default())?.roots;
            if roots.is_empty() {
                return Ok(Seeding {
                    points,
                    note: Some("no common zero of the damping terms in the box".into()),
                });
            }
            let mut k = 0;
            while points.len() < count && k < 100 * count.max(1) {
                let x = roots[k % roots.len()].point.clone();
                k += 1;
                let y: Vec<f64> = (0..n).map(|_| velocity(&mut rng)).collect();
                if let Some(p) = make_point(&ld, x, y, &Stratum::CaseC) {
                    points.push(p);
                }
            }
        }
        StratumRequest::CaseB(mask) => {
            let masks: Vec<u32> = match mask {
                Some(m) if m != 0 && m < full => vec![m],
                Some(m) => return Err(AnalysisError::BadSubset { mask: m, n }),
                None => (1..full).collect(),
            };
            if masks.is_empty() {
                return Ok(Seeding {
                    points,
                    note: Some("case_b needs n >= 2".into()),
                });
            }
            let mut sources = Vec::new();
            for &m in &masks {
                let free: Vec<usize> = (0..n).filter(|i| m & (1 << i) == 0).collect();
                let set = ConstraintSet::damping_only(sys, &free)?;
                let roots = solve_constraint_set(sys, m, &sys.omega_box, &RootOptions::default())?.roots;
                sources.push((m, set, roots));
            }
            let mut k = 0usize;
            while points.len() < count && k < 200 * count.max(1) {
                let (m, set, roots) = &sources[k % sources.len()];
                let use_root = (k / sources.len()) % 2 == 1 && !roots.is_empty();
                k += 1;
                let x = if use_root {
                    roots[rng.gen_range(0..roots.len())].point.clone()
                } else {
                    let start: Vec<f64> = bx.iter().map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect();
                    set.polish(&start)
                };
                if !set.residual(&x).is_ok_and(|r| r < CONSTRAINT_TOL) {
                    continue;
                }
                let y: Vec<f64> = (0..n)
                    .map(|i| if m & (1 << i) != 0 { 0.0 } else { velocity(&mut rng) })
                    .collect();
                let stratum = Stratum::CaseB {
                    subset: subset_members(*m, n),
                };
                if let Some(p) = make_point(&ld, x, y, &stratum) {
                    points.push(p);
                }
            }
        }
    }
    let note = (points.len() < count).then(|| format!("only {} of {count} points could be placed", points.len()));
    Ok(Seeding { points, note })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutcome {
    pub start: State,
    pub stratum: Option<Stratum>,
    pub horizon: f64,
    pub threshold: f64,
    /// First time with `V' < -threshold`; `None` if the orbit stayed on `W_O`.
    pub leave_time: Option<f64>,
    pub vdot_at_leave: Option<f64>,
    pub termination: Termination,
    /// Kept only for failed probes.
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl ProbeOutcome {
    pub fn left(&self) -> bool {
        self.leave_time.is_some()
    }
}

/// Integrate from `start` and locate the first time the energy derivative
/// drops below `-threshold`, refined by bisection on the dense output.
pub fn non_invariance_probe(
    sys: &LienardSystem,
    start: &State,
    horizon: f64,
    threshold: f64,
) -> Result<ProbeOutcome, AnalysisError> {
    if start.norm() == 0.0 {
        return Err(AnalysisError::OriginPoint);
    }
    let ld = LyapunovData::new(sys)?;
    let opts = IntegratorOptions::default().without_early_stop();
    let traj = integrate(sys, start, (0.0, horizon), &opts)?;
    let hit = traj.vdot.iter().position(|v| *v < -threshold);
    let (leave_time, vdot_at_leave) = match hit {
        None => (None, None),
        Some(0) => (Some(traj.times[0]), Some(traj.vdot[0])),
        Some(k) => {
            let (mut lo, mut hi) = (traj.times[k - 1], traj.times[k]);
            let mut vhi = traj.vdot[k];
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let v = ld.vdot_flat(&traj.sample_flat(mid)?)?;
                if v < -threshold {
                    hi = mid;
                    vhi = v;
                } else {
                    lo = mid;
                }
            }
            (Some(hi), Some(vhi))
        }
    };
    let termination = traj.termination;
    Ok(ProbeOutcome {
        start: start.clone(),
        stratum: None,
        horizon,
        threshold,
        leave_time,
        vdot_at_leave,
        termination,
        trajectory: leave_time.is_none().then_some(traj),
    })
}

/// Probe every point in parallel; results keep the input order.
pub fn probe_points(
    sys: &LienardSystem,
    points: &[WOPoint],
    horizon: f64,
    threshold: f64,
) -> Result<Vec<ProbeOutcome>, AnalysisError> {
    points
        .par_iter()
        .map(|p| {
            let mut out = non_invariance_probe(sys, &p.state, horizon, threshold)?;
            out.stratum = Some(p.stratum.clone());
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AttractionOptions {
    pub seed: u64,
    pub convergence_radius: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for AttractionOptions {
    fn default() -> Self {
        AttractionOptions {
            seed: 0,
            convergence_radius: 1e-3,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AttractionSample {
    pub initial: State,
    pub initial_v: f64,
    pub terminal_norm: f64,
    pub terminal_time: f64,
    pub terminal_v: f64,
    pub termination: Termination,
    /// Largest `V(t_{k+1}) - V(t_k)` over accepted steps.
    pub max_v_increase: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttractionReport {
    pub system: String,
    pub c_level: f64,
    pub t_max: f64,
    pub convergence_radius: f64,
    pub sample_count: usize,
    pub converged_count: usize,
    pub converged_fraction: f64,
    /// Sample with the largest terminal `|z|`.
    pub slowest: Option<usize>,
    pub max_v_increase: f64,
    pub samples: Vec<AttractionSample>,
}

/// Largest `|x| <= limit` in direction `sign` with `G_axis(x) < level`.
fn primitive_extent(ld: &LyapunovData, axis: usize, sign: f64, limit: f64, level: f64) -> Result<f64, LyapunovError> {
    if ld.primitive(axis, sign * limit)? < level {
        return Ok(limit);
    }
    let (mut lo, mut hi) = (0.0, limit);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ld.primitive(axis, sign * mid)? < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Draw `sample_count` states uniformly from `{V < c_level}` and integrate
/// each to `t_max`. A sample converges when its terminal `|z|` is below the
/// convergence radius. The hypotheses are not re-checked here.
pub fn verify_attraction(
    sys: &LienardSystem,
    c_level: f64,
    sample_count: usize,
    t_max: f64,
    opts: &AttractionOptions,
) -> Result<AttractionReport, AnalysisError> {
    if !(c_level > 0.0 && c_level.is_finite()) {
        return Err(AnalysisError::Level(c_level));
    }
    let ld = LyapunovData::new(sys)?;
    let n = sys.n;
    // With monotone primitives the sublevel set is a connected region around
    // the origin, so rejection sampling on its bounding box is exact.
    let mut bounds = Vec::with_capacity(2 * n);
    for i in 0..n {
        let d = &sys.xdomain[i];
        let o = &sys.omega_box[i];
        let lo = primitive_extent(&ld, i, -1.0, (-d.lo).min(-o.lo) * (1.0 - 1e-12), c_level)?;
        let hi = primitive_extent(&ld, i, 1.0, d.hi.min(o.hi) * (1.0 - 1e-12), c_level)?;
        bounds.push((-lo, hi));
    }
    let vmax = (2.0 * c_level).sqrt();
    for _ in 0..n {
        bounds.push((-vmax, vmax));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(sample_count);
    let max_attempts = 10_000 * sample_count.max(1);
    let mut attempts = 0;
    while starts.len() < sample_count && attempts < max_attempts {
        attempts += 1;
        let z: Vec<f64> = bounds.iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect();
        if ld.v_flat(&z)? < c_level && sys.in_domain(&z[..n]) {
            starts.push(z);
        }
    }
    if starts.len() < sample_count {
        return Err(AnalysisError::Sampling {
            wanted: sample_count,
            got: starts.len(),
            level: c_level,
        });
    }

    let iopts = IntegratorOptions::with_tolerances(opts.rel_tol, opts.abs_tol);
    let samples = starts
        .par_iter()
        .map(|z| {
            let initial = State::from_flat(z);
            let traj = integrate(sys, &initial, (0.0, t_max), &iopts)?;
            let last = traj.states.last().expect("trajectory has a start point");
            let terminal_norm = norm(last);
            Ok(AttractionSample {
                initial_v: traj.v[0],
                initial,
                terminal_norm,
                terminal_time: traj.end(),
                terminal_v: *traj.v.last().unwrap(),
                termination: traj.termination,
                max_v_increase: traj.max_v_increase(),
                converged: terminal_norm < opts.convergence_radius,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    let converged_count = samples.iter().filter(|s| s.converged).count();
    let slowest = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.terminal_norm.total_cmp(&b.1.terminal_norm))
        .map(|(i, _)| i);
    let max_v_increase = samples.iter().map(|s| s.max_v_increase).fold(f64::NEG_INFINITY, f64::max);
    Ok(AttractionReport {
        system: sys.name.clone(),
        c_level,
        t_max,
        convergence_radius: opts.convergence_radius,
        sample_count,
        converged_count,
        converged_fraction: if sample_count == 0 {
            1.0
        } else {
            converged_count as f64 / sample_count as f64
        },
        slowest,
        max_v_increase,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(name: &str) -> LienardSystem {
        LienardSystem::builtin(name).unwrap()
    }

    #[test]
    fn case_a_points_have_zero_velocity() {
        let s = seed_wo_points(&sys("squares"), 10, StratumRequest::CaseA, 1).unwrap();
        assert_eq!(s.points.len(), 10);
        for p in &s.points {
            assert!(p.state.y.iter().all(|v| *v == 0.0));
            assert_eq!(p.vdot, 0.0);
        }
    }

    #[test]
    fn case_b_points_satisfy_constraints() {
        let ell = sys("ellipses");
        let s = seed_wo_points(&ell, 12, StratumRequest::CaseB(Some(0b01)), 2).unwrap();
        assert_eq!(s.points.len(), 12);
        for p in &s.points {
            assert_eq!(p.state.y[0], 0.0);
            assert!(p.state.y[1].abs() >= 0.1);
            assert!(ell.damping(&p.state.x).unwrap()[1].abs() < 1e-12);
        }
    }

    #[test]
    fn case_c_on_squares_uses_common_zeros() {
        let s = seed_wo_points(&sys("squares"), 10, StratumRequest::CaseC, 3).unwrap();
        assert_eq!(s.points.len(), 10);
        for p in &s.points {
            assert!(p.state.y.iter().all(|v| (0.1..=1.0).contains(&v.abs())));
        }
        assert!(s.points.iter().any(|p| (p.state.x[0] - 1.0).abs() < 1e-9 && (p.state.x[1] - 1.0).abs() < 1e-9));
    }

    #[test]
    fn ellipse_case_b_example_leaves_quickly() {
        let z = State::new(vec![0.5f64.sqrt(), 0.0], vec![0.0, 1.0]);
        let out = non_invariance_probe(&sys("ellipses"), &z, 1.0, 1e-10).unwrap();
        let t = out.leave_time.unwrap();
        assert!(t > 0.0 && t < 0.1, "{t}");
        assert!(out.vdot_at_leave.unwrap() < -1e-10);
    }

    #[test]
    fn rest_point_off_origin_leaves() {
        let z = State::new(vec![0.7, -0.4], vec![0.0, 0.0]);
        let out = non_invariance_probe(&sys("squares"), &z, 1.0, 1e-10).unwrap();
        assert!(out.leave_time.is_some_and(|t| t > 0.0 && t < 1.0));
    }

    #[test]
    fn origin_rejected() {
        assert!(matches!(
            non_invariance_probe(&sys("squares"), &State::origin(2), 1.0, 1e-10),
            Err(AnalysisError::OriginPoint)
        ));
    }

    #[test]
    fn oscillator_never_leaves() {
        let z = State::new(vec![1.0, 0.0], vec![0.0, 0.0]);
        let out = non_invariance_probe(&sys("oscillator"), &z, 1.0, 1e-10).unwrap();
        assert!(out.leave_time.is_none());
        assert!(out.trajectory.is_some());
    }

    #[test]
    fn ellipses_attraction() {
        let r = verify_attraction(&sys("ellipses"), 0.25, 8, 500.0, &AttractionOptions::default()).unwrap();
        assert_eq!(r.converged_count, 8);
        for s in &r.samples {
            assert!(s.initial_v < 0.25);
            assert!(s.max_v_increase <= 1e-8);
        }
    }

    #[test]
    fn oscillator_does_not_converge() {
        let r = verify_attraction(&sys("oscillator"), 0.5, 5, 50.0, &AttractionOptions::default()).unwrap();
        assert_eq!(r.converged_count, 0);
    }

    #[test]
    fn sampling_is_seeded() {
        let a = verify_attraction(&sys("ellipses"), 0.25, 3, 1.0, &AttractionOptions::default()).unwrap();
        let b = verify_attraction(&sys("ellipses"), 0.25, 3, 1.0, &AttractionOptions::default()).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.initial.to_flat(), y.initial.to_flat());
            assert_eq!(x.terminal_norm, y.terminal_norm);
        }
    }
}
