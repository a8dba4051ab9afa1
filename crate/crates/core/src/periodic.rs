//! Periodic responses to small `T`-periodic forcing. Fixed points of the
//! period map are found by damped Newton with a finite-difference Jacobian
//! and followed in `eps` down to the null solution.

use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::integrate::{integrate_perturbed, IntegrateError, IntegratorOptions, Termination};
use crate::model::{norm, LienardSystem, Perturbation, State};

#[derive(Debug, Error)]
pub enum PeriodicError {
    #[error("integration over one period stopped early ({0:?})")]
    Incomplete(Termination),
    #[error("Newton stalled at |F| = {residual:e} after {iterations} iterations")]
    Diverged {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },
    #[error("period-map Jacobian is singular (a Floquet multiplier is close to 1)")]
    SingularJacobian { last: Vec<f64> },
    #[error("orbit residual {0:e} does not survive re-verification at tighter tolerance")]
    NotVerified(f64),
    #[error("eps values must be positive, finite and strictly decreasing (0 allowed last)")]
    EpsList,
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

pub const MAP_TOL: f64 = 1e-11;
pub const VERIFY_TOL: f64 = 1e-12;

fn map_options(tol: f64) -> IntegratorOptions {
    IntegratorOptions::with_tolerances(tol, tol).without_early_stop()
}

/// `z(T)` for the forced system started at `z0` at `t = 0`.
pub fn period_map(sys: &LienardSystem, pert: &Perturbation, eps: f64, z0: &State) -> Result<State, PeriodicError> {
    Ok(State::from_flat(&period_map_flat(sys, pert, eps, z0.to_flat().as_slice(), MAP_TOL)?))
}

fn period_map_flat(
    sys: &LienardSystem,
    pert: &Perturbation,
    eps: f64,
    z0: &[f64],
    tol: f64,
) -> Result<Vec<f64>, PeriodicError> {
    let traj = integrate_perturbed(sys, pert, eps, &State::from_flat(z0), (0.0, pert.period), &map_options(tol))?;
    if traj.termination != Termination::TEnd {
        return Err(PeriodicError::Incomplete(traj.termination));
    }
    Ok(traj.states.last().expect("nonempty trajectory").clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootOptions {
    pub tol: f64,
    pub fd_step: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub samples_per_period: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            tol: 1e-10,
            fd_step: 1e-7,
            max_iterations: 30,
            max_halvings: 8,
            samples_per_period: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicOrbit {
    pub eps: f64,
    pub period: f64,
    pub initial_state: Vec<f64>,
    /// `|z(T) - z*|` from the tighter verification run.
    pub residual: f64,
    pub newton_iterations: usize,
    pub times: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    /// `max_t |z(t)|` over the samples.
    pub amplitude: f64,
    /// `max_t |z_k(t)|` per state component `(x1..xn, y1..yn)`.
    pub component_amplitudes: Vec<f64>,
    pub multipliers: Vec<Complex64>,
    pub multiplier_moduli: Vec<f64>,
}

impl PeriodicOrbit {
    fn null(sys: &LienardSystem, pert: &Perturbation, samples_per_period: usize) -> Self {
        let dim = 2 * sys.n;
        let times: Vec<f64> = (0..=samples_per_period)
            .map(|k| pert.period * k as f64 / samples_per_period as f64)
            .collect();
        PeriodicOrbit {
            eps: 0.0,
            period: pert.period,
            initial_state: vec![0.0; dim],
            residual: 0.0,
            newton_iterations: 0,
            samples: vec![vec![0.0; dim]; times.len()],
            times,
            amplitude: 0.0,
            component_amplitudes: vec![0.0; dim],
            multipliers: Vec::new(),
            multiplier_moduli: Vec::new(),
        }
    }

    pub fn max_multiplier_modulus(&self) -> Option<f64> {
        self.multiplier_moduli.iter().copied().reduce(f64::max)
    }

    /// Columns `t, x1..xn, y1..yn, |z|`.
    pub fn to_csv(&self) -> String {
        let n = self.initial_state.len() / 2;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# eps={:e} period={:e} residual={:e} amplitude={:e}",
            self.eps, self.period, self.residual, self.amplitude
        );
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("y{i}")));
        header.push("norm".to_string());
        let _ = writeln!(out, "{}", header.join(","));
        for (t, z) in self.times.iter().zip(&self.samples) {
            let mut row = vec![format!("{t:e}")];
            row.extend(z.iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", norm(z)));
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Forward-difference derivative of the period map at `z`, given `p = P(z)`.
fn monodromy(
    sys: &LienardSystem,
    pert: &Perturbation,
    eps: f64,
    z: &[f64],
    p: &[f64],
    h: f64,
) -> Result<DMatrix<f64>, PeriodicError> {
    let dim = z.len();
    let mut m = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let mut zk = z.to_vec();
        zk[k] += h;
        let pk = period_map_flat(sys, pert, eps, &zk, MAP_TOL)?;
        for i in 0..dim {
            m[(i, k)] = (pk[i] - p[i]) / h;
        }
    }
    Ok(m)
}

fn residual_of(z: &[f64], p: &[f64]) -> Vec<f64> {
    p.iter().zip(z).map(|(a, b)| a - b).collect()
}

/// Damped Newton on `F(z) = P(z) - z` from `guess`.
pub fn shoot(
    sys: &LienardSystem,
    pert: &Perturbation,
    eps: f64,
    guess: &State,
    opts: &ShootOptions,
) -> Result<PeriodicOrbit, PeriodicError> {
    let dim = 2 * sys.n;
    let mut z = guess.to_flat();
    let mut p = period_map_flat(sys, pert, eps, &z, MAP_TOL)?;
    let mut f = residual_of(&z, &p);
    let mut fnorm = norm(&f);
    let mut iterations = 0;
    let mono = loop {
        let m = monodromy(sys, pert, eps, &z, &p, opts.fd_step)?;
        if fnorm < opts.tol {
            break m;
        }
        if iterations >= opts.max_iterations {
            return Err(PeriodicError::Diverged {
                iterations,
                residual: fnorm,
                last: z,
            });
        }
        iterations += 1;
        let jac = &m - DMatrix::identity(dim, dim);
        let Some(delta) = jac.lu().solve(&(-DVector::from_row_slice(&f))) else {
            return Err(PeriodicError::SingularJacobian { last: z });
        };
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(PeriodicError::SingularJacobian { last: z });
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = z.iter().zip(delta.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Ok(pc) = period_map_flat(sys, pert, eps, &cand, MAP_TOL) {
                let fc = residual_of(&cand, &pc);
                let nc = norm(&fc);
                if nc < fnorm {
                    z = cand;
                    p = pc;
                    f = fc;
                    fnorm = nc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(PeriodicError::Diverged {
                iterations,
                residual: fnorm,
                last: z,
            });
        }
    };

    let multipliers: Vec<Complex64> = mono.complex_eigenvalues().iter().copied().collect();
    let mut multipliers = multipliers;
    multipliers.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    let multiplier_moduli = multipliers.iter().map(|c| c.norm()).collect();

    // Re-verify on a tighter run that also provides the dense samples.
    let verify = integrate_perturbed(
        sys,
        pert,
        eps,
        &State::from_flat(&z),
        (0.0, pert.period),
        &map_options(VERIFY_TOL),
    )?;
    if verify.termination != Termination::TEnd {
        return Err(PeriodicError::Incomplete(verify.termination));
    }
    let count = opts.samples_per_period.max(200);
    let times: Vec<f64> = (0..=count).map(|k| pert.period * k as f64 / count as f64).collect();
    let mut samples = Vec::with_capacity(times.len());
    for (k, t) in times.iter().enumerate() {
        samples.push(if k == count {
            verify.states.last().unwrap().clone()
        } else {
            verify.sample_flat(*t)?
        });
    }
    let residual = norm(&residual_of(&samples[0], &samples[count]));
    if !(residual < 1e-9) {
        return Err(PeriodicError::NotVerified(residual));
    }
    let amplitude = samples.iter().map(|s| norm(s)).fold(0.0, f64::max);
    let component_amplitudes = (0..dim)
        .map(|i| samples.iter().map(|s| s[i].abs()).fold(0.0, f64::max))
        .collect();
    Ok(PeriodicOrbit {
        eps,
        period: pert.period,
        initial_state: z,
        residual,
        newton_iterations: iterations,
        times,
        samples,
        amplitude,
        component_amplitudes,
        multipliers,
        multiplier_moduli,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Pass,
    Fail,
    InsufficientPoints,
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::Pass => "PASS",
            Trend::Fail => "FAIL",
            Trend::InsufficientPoints => "insufficient points for trend",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationReport {
    pub system: String,
    pub eps_list: Vec<f64>,
    pub orbits: Vec<PeriodicOrbit>,
    pub trend: Trend,
    pub strictly_decreasing: bool,
    /// `max / min` of `amplitude / eps` over the positive eps values.
    pub ratio_spread: Option<f64>,
    /// Largest eps at which shooting converged: an empirical lower bound on
    /// the range where periodic solutions exist.
    pub largest_converged_eps: Option<f64>,
    /// Error that stopped the continuation, if any.
    pub failure: Option<String>,
}

impl ContinuationReport {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn trend_of(orbits: &[PeriodicOrbit]) -> (Trend, bool, Option<f64>) {
    let decreasing = orbits.windows(2).all(|w| w[1].amplitude < w[0].amplitude);
    let ratios: Vec<f64> = orbits.iter().filter(|o| o.eps > 0.0).map(|o| o.amplitude / o.eps).collect();
    let spread = (!ratios.is_empty()).then(|| {
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    });
    let trend = if orbits.len() < 2 {
        Trend::InsufficientPoints
    } else if decreasing && spread.is_none_or(|s| s <= 2.0) {
        Trend::Pass
    } else {
        Trend::Fail
    };
    (trend, decreasing, spread)
}

/// Shoot at each eps in turn, warm-starting from the previous orbit. An
/// `eps = 0` entry with eps-scaled forcing yields the exact null solution.
pub fn continuation(
    sys: &LienardSystem,
    pert: &Perturbation,
    eps_list: &[f64],
    guess: &State,
    opts: &ShootOptions,
) -> Result<ContinuationReport, PeriodicError> {
    let valid = eps_list.iter().all(|e| e.is_finite() && *e >= 0.0)
        && eps_list.windows(2).all(|w| w[1] < w[0])
        && eps_list.iter().rev().skip(1).all(|e| *e > 0.0);
    if !valid {
        return Err(PeriodicError::EpsList);
    }
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    let mut failure = None;
    let mut start = guess.clone();
    for &eps in eps_list {
        let result = if eps == 0.0 && pert.eps_scaled {
            Ok(PeriodicOrbit::null(sys, pert, opts.samples_per_period.max(200)))
        } else {
            shoot(sys, pert, eps, &start, opts)
        };
        match result {
            Ok(orbit) => {
                start = State::from_flat(&orbit.initial_state);
                orbits.push(orbit);
            }
            Err(e) => {
                failure = Some(format!("eps = {eps}: {e}"));
                break;
            }
        }
    }
    let (trend, strictly_decreasing, ratio_spread) = trend_of(&orbits);
    let trend = if failure.is_some() && trend == Trend::Pass {
        Trend::Fail
    } else {
        trend
    };
    Ok(ContinuationReport {
        system: sys.name.clone(),
        eps_list: eps_list.to_vec(),
        largest_converged_eps: orbits.iter().map(|o| o.eps).filter(|e| *e > 0.0).reduce(f64::max),
        orbits,
        trend,
        strictly_decreasing,
        ratio_spread,
        failure,
    })
}
