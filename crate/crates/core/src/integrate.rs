//! Dormand-Prince 5(4) with PI step control and Hairer's continuous
//! extension. Every accepted step records `V` and `V'` so that energy
//! monotonicity can be audited after the fact.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::expr::ExprError;
use crate::lyapunov::{LyapunovData, LyapunovError};
use crate::model::{norm, LienardSystem, Perturbation, State};

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("tolerance {0:e} outside [1e-13, 1e-3]")]
    Tolerance(f64),
    #[error("time span must satisfy t_end > t_start, got [{0}, {1}]")]
    Span(f64, f64),
    #[error("initial state {0:?} lies outside the system domain")]
    InitialOutOfDomain(Vec<f64>),
    #[error("state has dimension {got}, system expects {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error("query time {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TEnd,
    ConvergedToOrigin,
    LeftDomain,
    StepUnderflow,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Stop once `|z|` stays below this radius for ten accepted steps.
    pub convergence_radius: Option<f64>,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            convergence_radius: Some(1e-9),
            max_steps: 2_000_000,
            initial_step: None,
            max_step: None,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorOptions {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    pub fn without_early_stop(mut self) -> Self {
        self.convergence_radius = None;
        self
    }
}

const CONVERGED_STEPS: usize = 10;
const MIN_STEP: f64 = 1e-14;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - 0.75 * BETA;
const STIFF_REJECTIONS: usize = 15;

#[derive(Debug, Clone, Default, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub max_consecutive_rejections: usize,
    /// Set when a run of consecutive rejections suggests stiffness.
    pub stiffness_suspected: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Flat `(x, y)` states, one per time stamp.
    pub states: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub vdot: Vec<f64>,
    pub stats: StepStats,
    pub termination: Termination,
    /// Continuous-extension coefficients for the step ending at `times[k+1]`.
    dense: Vec<Vec<f64>>,
    dim: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Trajectory {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn final_state(&self) -> State {
        State::from_flat(self.states.last().expect("trajectory has at least one sample"))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest increase `V(t_{k+1}) - V(t_k)` over consecutive samples.
    /// Largest `V(t_{k+1}) - V(t_k)`; zero for a single-point trajectory.
    pub fn max_v_increase(&self) -> f64 {
        self.v
            .windows(2)
            .map(|w| w[1] - w[0])
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    /// Dense-output state at `t`; stored samples are returned verbatim.
    pub fn sample_dense(&self, t: f64) -> Result<State, IntegrateError> {
        Ok(State::from_flat(&self.sample_flat(t)?))
    }

    pub fn sample_flat(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        let (start, end) = (self.start(), self.end());
        if !(start <= t && t <= end) {
            return Err(IntegrateError::OutOfRange { t, start, end });
        }
        let k = match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => return Ok(self.states[k].clone()),
            Err(k) => k - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let theta = (t - t0) / (t1 - t0);
        let theta1 = 1.0 - theta;
        let d = self.dim;
        let r = &self.dense[k];
        Ok((0..d)
            .map(|i| {
                r[i] + theta * (r[d + i] + theta1 * (r[2 * d + i] + theta * (r[3 * d + i] + theta1 * r[4 * d + i])))
            })
            .collect())
    }

    /// CSV with a `#` header naming the system and tolerances, then
    /// `t,x1..xn,y1..yn,V,Vdot`.
    pub fn to_csv(&self, system_name: &str) -> String {
        let n = self.dim / 2;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# system={system_name} rel_tol={:e} abs_tol={:e} termination={:?}",
            self.rel_tol, self.abs_tol, self.termination
        );
        out.push('t');
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=n {
            let _ = write!(out, ",y{i}");
        }
        out.push_str(",V,Vdot\n");
        for k in 0..self.times.len() {
            let _ = write!(out, "{:e}", self.times[k]);
            for v in &self.states[k] {
                let _ = write!(out, ",{v:e}");
            }
            let _ = writeln!(out, ",{:e},{:e}", self.v[k], self.vdot[k]);
        }
        out
    }
}

fn check_inputs(sys: &LienardSystem, z0: &State, t_span: (f64, f64), opts: &IntegratorOptions) -> Result<(), IntegrateError> {
    for tol in [opts.rel_tol, opts.abs_tol] {
        if !(1e-13..=1e-3).contains(&tol) {
            return Err(IntegrateError::Tolerance(tol));
        }
    }
    if !(t_span.1 > t_span.0) || !t_span.0.is_finite() || !t_span.1.is_finite() {
        return Err(IntegrateError::Span(t_span.0, t_span.1));
    }
    if z0.x.len() != sys.n || z0.y.len() != sys.n {
        return Err(IntegrateError::StateDimension {
            expected: sys.n,
            got: z0.x.len().max(z0.y.len()),
        });
    }
    if !sys.in_domain(&z0.x) || !z0.is_finite() {
        return Err(IntegrateError::InitialOutOfDomain(z0.to_flat()));
    }
    Ok(())
}

/// Integrate the autonomous system from `z0` over `t_span`.
pub fn integrate(
    sys: &LienardSystem,
    z0: &State,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegrateError> {
    check_inputs(sys, z0, t_span, opts)?;
    let ld = LyapunovData::new(sys)?;
    run(&ld, |_, z, out| sys.field_into(z, out), z0, t_span, opts)
}

/// Integrate the forced system `x'' + f x' + g = h(t, x, x', eps)`.
pub fn integrate_perturbed(
    sys: &LienardSystem,
    pert: &Perturbation,
    eps: f64,
    z0: &State,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegrateError> {
    check_inputs(sys, z0, t_span, opts)?;
    let ld = LyapunovData::new(sys)?;
    run(
        &ld,
        |t, z, out| {
            sys.field_into(z, out)?;
            pert.add_forcing(t, eps, z, out)
        },
        z0,
        t_span,
        opts,
    )
}

// Dormand-Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &IntegratorOptions) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], opts: &IntegratorOptions, span: f64) -> Result<f64, IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), ExprError>,
{
    let scale = |v: f64| opts.abs_tol + opts.rel_tol * v.abs();
    let rms = |it: &mut dyn Iterator<Item = f64>| {
        let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
        (s / c as f64).sqrt()
    };
    let d0 = rms(&mut y0.iter().map(|v| v / scale(*v)));
    let d1 = rms(&mut f0.iter().zip(y0).map(|(f, v)| f / scale(*v)));
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    rhs(t0 + h0, &y1, &mut f1)?;
    let d2 = rms(&mut f1.iter().zip(f0).zip(y0).map(|((a, b), v)| (a - b) / scale(*v))) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

fn run<F>(
    ld: &LyapunovData,
    mut rhs: F,
    z0: &State,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), ExprError>,
{
    let sys = ld.system();
    let d = 2 * sys.n;
    let (t_start, t_end) = t_span;
    let mut t = t_start;
    let mut y = z0.to_flat();

    let mut traj = Trajectory {
        times: vec![t],
        states: vec![y.clone()],
        v: vec![ld.v_flat(&y)?],
        vdot: vec![ld.vdot_flat(&y)?],
        stats: StepStats::default(),
        termination: Termination::TEnd,
        dense: Vec::new(),
        dim: d,
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
    };

    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut k5 = vec![0.0; d];
    let mut k6 = vec![0.0; d];
    let mut k7 = vec![0.0; d];
    let mut stage = vec![0.0; d];
    let mut y_new = vec![0.0; d];
    let mut err = vec![0.0; d];

    rhs(t, &y, &mut k1)?;
    traj.stats.evaluations += 1;
    if opts.convergence_radius.is_some() && y.iter().chain(&k1).all(|v| *v == 0.0) {
        // Started at rest on the equilibrium.
        traj.termination = Termination::ConvergedToOrigin;
        return Ok(traj);
    }
    let span = t_end - t_start;
    let h_max = opts.max_step.unwrap_or(span).min(span);
    let mut h = match opts.initial_step {
        Some(h) => h.min(h_max),
        None => {
            traj.stats.evaluations += 1;
            initial_step(&mut rhs, t, &y, &k1, opts, span)?.min(h_max)
        }
    };
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut consecutive_rejections = 0;
    let mut near_origin = 0;

    loop {
        if traj.stats.accepted >= opts.max_steps {
            traj.termination = Termination::MaxSteps;
            break;
        }
        let mut last = false;
        if t + h >= t_end || (t_end - (t + h)) <= 1e-12 * t_end.abs().max(1.0) {
            h = t_end - t;
            last = true;
        }
        if h.abs() < MIN_STEP {
            traj.termination = Termination::StepUnderflow;
            break;
        }

        for i in 0..d {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &stage, &mut k2)?;
        for i in 0..d {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &stage, &mut k3)?;
        for i in 0..d {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &stage, &mut k4)?;
        for i in 0..d {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &stage, &mut k5)?;
        for i in 0..d {
            stage[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_next = if last { t_end } else { t + h };
        rhs(t_next, &stage, &mut k6)?;
        for i in 0..d {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_next, &y_new, &mut k7)?;
        traj.stats.evaluations += 6;
        for i in 0..d {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y_new, opts);
        if !en.is_finite() {
            return Err(IntegrateError::NonFinite(t_next));
        }

        if en <= 1.0 {
            let mut fac = SAFETY * en.max(1e-10).powf(-EXPO) * err_old.powf(BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            err_old = en.max(1e-4);

            let mut rc = vec![0.0; 5 * d];
            for i in 0..d {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rc[i] = y[i];
                rc[d + i] = ydiff;
                rc[2 * d + i] = bspl;
                rc[3 * d + i] = ydiff - h * k7[i] - bspl;
                rc[4 * d + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            traj.dense.push(rc);

            t = t_next;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            traj.stats.accepted += 1;
            consecutive_rejections = 0;
            last_rejected = false;
            traj.times.push(t);
            traj.states.push(y.clone());
            traj.v.push(ld.v_flat(&y)?);
            traj.vdot.push(ld.vdot_flat(&y)?);

            if !sys.in_domain(&y[..sys.n]) {
                traj.termination = Termination::LeftDomain;
                break;
            }
            if last {
                traj.termination = Termination::TEnd;
                break;
            }
            if let Some(r) = opts.convergence_radius {
                if norm(&y) < r {
                    near_origin += 1;
                    if near_origin >= CONVERGED_STEPS {
                        traj.termination = Termination::ConvergedToOrigin;
                        break;
                    }
                } else {
                    near_origin = 0;
                }
            }
            h = (h * fac).min(h_max);
        } else {
            let fac = (SAFETY * en.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            traj.stats.rejected += 1;
            consecutive_rejections += 1;
            last_rejected = true;
            traj.stats.max_consecutive_rejections = traj.stats.max_consecutive_rejections.max(consecutive_rejections);
            if consecutive_rejections >= STIFF_REJECTIONS {
                traj.stats.stiffness_suspected = true;
            }
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn osc() -> LienardSystem {
        LienardSystem::builtin("oscillator").unwrap()
    }

    #[test]
    fn oscillator_full_period_returns() {
        let z0 = State::from_flat(&[1.0, 0.0, 0.0, 0.0]);
        let tr = integrate(&osc(), &z0, (0.0, 2.0 * PI), &IntegratorOptions::default()).unwrap();
        assert_eq!(tr.termination, Termination::TEnd);
        assert_eq!(tr.end(), 2.0 * PI);
        let zf = tr.final_state().to_flat();
        for (a, b) in zf.iter().zip(z0.to_flat()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn origin_stays_put() {
        let opts = IntegratorOptions::default().without_early_stop();
        let tr = integrate(&osc(), &State::origin(2), (0.0, 10.0), &opts).unwrap();
        assert!(tr.states.iter().all(|s| s.iter().all(|v| *v == 0.0)));
        assert!(tr.vdot.iter().all(|v| *v == 0.0));
        let tr = integrate(&osc(), &State::origin(2), (0.0, 10.0), &IntegratorOptions::default()).unwrap();
        assert_eq!(tr.termination, Termination::ConvergedToOrigin);
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn dense_output_examples() {
        let z0 = State::from_flat(&[1.0, 0.0, 0.0, 0.0]);
        let tr = integrate(&osc(), &z0, (0.0, 2.0 * PI), &IntegratorOptions::default()).unwrap();
        let k = tr.len() / 2;
        assert_eq!(tr.sample_flat(tr.times[k]).unwrap(), tr.states[k]);
        let half = tr.sample_flat(PI).unwrap();
        let expected = [-1.0, 0.0, 0.0, 0.0];
        for (a, b) in half.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{half:?}");
        }
        // against the exact solution at off-grid times
        for j in 0..200 {
            let t = 2.0 * PI * (j as f64 + 0.37) / 200.0;
            let s = tr.sample_flat(t).unwrap();
            assert!((s[0] - t.cos()).abs() < 1e-7 && (s[2] + t.sin()).abs() < 1e-7);
        }
        assert!(matches!(tr.sample_flat(7.0), Err(IntegrateError::OutOfRange { .. })));
    }

    #[test]
    fn bad_inputs_rejected() {
        let z0 = State::origin(2);
        let o = osc();
        assert!(matches!(
            integrate(&o, &z0, (0.0, 1.0), &IntegratorOptions::with_tolerances(1e-2, 1e-6)),
            Err(IntegrateError::Tolerance(_))
        ));
        assert!(matches!(integrate(&o, &z0, (1.0, 1.0), &IntegratorOptions::default()), Err(IntegrateError::Span(..))));
        let far = State::from_flat(&[9.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            integrate(&o, &far, (0.0, 1.0), &IntegratorOptions::default()),
            Err(IntegrateError::InitialOutOfDomain(_))
        ));
    }

    #[test]
    fn leaving_the_domain_terminates() {
        let sys = LienardSystem::from_strs("box", &["0", "0"], &["x1", "x2"], 1.0).unwrap();
        let z0 = State::from_flat(&[0.5, 0.0, 2.0, 0.0]);
        let tr = integrate(&sys, &z0, (0.0, 10.0), &IntegratorOptions::default()).unwrap();
        assert_eq!(tr.termination, Termination::LeftDomain);
        assert!(tr.final_state().x[0] >= 1.0);
    }

    #[test]
    fn csv_layout() {
        let z0 = State::from_flat(&[1.0, 0.0, 0.0, 0.0]);
        let tr = integrate(&osc(), &z0, (0.0, 1.0), &IntegratorOptions::default()).unwrap();
        let csv = tr.to_csv("oscillator");
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# system=oscillator rel_tol=1e-10"));
        assert_eq!(lines.next().unwrap(), "t,x1,x2,y1,y2,V,Vdot");
        assert_eq!(lines.count(), tr.len());
    }
}
