//! The coupled system `x_i' = y_i`, `y_i' = -g_i(x_i) - y_i f_i(X)`, its
//! periodically forced variant and the built-in example systems.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError, Point, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("expected {expected} {what}, got {got}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("g{index} must depend on x{index} only, found `{var}`")]
    RestoringCoupled { index: usize, var: Var },
    #[error("f{index} may depend on positions x1..x{n} only, found `{var}`")]
    DampingVariable { index: usize, n: usize, var: Var },
    #[error("g{index}(0) = {value} is not zero")]
    RestoringNotZeroAtOrigin { index: usize, value: f64 },
    #[error("domain interval ({lo}, {hi}) for axis {index} must satisfy lo < 0 < hi")]
    BadDomain { index: usize, lo: f64, hi: f64 },
    #[error("state {0:?} lies outside the system domain")]
    OutOfDomain(Vec<f64>),
    #[error("state has dimension {got}, system expects {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error("unknown builtin system `{0}` (expected intro, squares, ellipses, cubic or oscillator)")]
    UnknownBuiltin(String),
    #[error("perturbation period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("h{index} may depend on t, eps, x1..xn, y1..yn only, found `{var}`")]
    PerturbationVariable { index: usize, var: Var },
    #[error("h{index} is not {period}-periodic in t (differs by {gap:e} at t = {t})")]
    NotPeriodic {
        index: usize,
        period: f64,
        t: f64,
        gap: f64,
    },
    #[error("cannot differentiate g{index} at 0: {source}")]
    NonDifferentiable { index: usize, source: ExprError },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn symmetric(r: f64) -> Self {
        Interval { lo: -r, hi: r }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains_closed(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_open(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }
}

/// Positions and velocities, `Z = (X, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl State {
    pub fn origin(n: usize) -> Self {
        State {
            x: vec![0.0; n],
            y: vec![0.0; n],
        }
    }

    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "position and velocity blocks differ in length");
        State { x, y }
    }

    /// Split a flat `(x1..xn, y1..yn)` vector.
    pub fn from_flat(z: &[f64]) -> Self {
        assert!(z.len().is_multiple_of(2), "flat state must have even length");
        let n = z.len() / 2;
        State {
            x: z[..n].to_vec(),
            y: z[n..].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        z.extend_from_slice(&self.y);
        z
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.x).hypot(norm(&self.y))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LienardSystem {
    pub name: String,
    pub n: usize,
    pub f: Vec<Expr>,
    pub g: Vec<Expr>,
    pub omega_box: Vec<Interval>,
    pub xdomain: Vec<Interval>,
}

impl LienardSystem {
    pub fn new(
        name: impl Into<String>,
        f: Vec<Expr>,
        g: Vec<Expr>,
        omega_box: Vec<Interval>,
        xdomain: Vec<Interval>,
    ) -> Result<Self, ModelError> {
        let n = f.len();
        if n == 0 {
            return Err(ModelError::ZeroDimension);
        }
        for (what, got) in [("g expressions", g.len()), ("omega intervals", omega_box.len()), ("xdomain intervals", xdomain.len())] {
            if got != n {
                return Err(ModelError::Arity { what, expected: n, got });
            }
        }
        for (i, fi) in f.iter().enumerate() {
            if let Some(var) = fi.variables().into_iter().find(|v| !matches!(v, Var::X(k) if *k < n)) {
                return Err(ModelError::DampingVariable { index: i + 1, n, var });
            }
        }
        for (i, gi) in g.iter().enumerate() {
            if let Some(var) = gi.variables().into_iter().find(|v| *v != Var::X(i)) {
                return Err(ModelError::RestoringCoupled { index: i + 1, var });
            }
            let at_zero = gi.eval(&Point::positions(&vec![0.0; n]))?;
            if at_zero.abs() > 1e-12 {
                return Err(ModelError::RestoringNotZeroAtOrigin {
                    index: i + 1,
                    value: at_zero,
                });
            }
        }
        for (i, iv) in xdomain.iter().chain(&omega_box).enumerate() {
            if !(iv.lo < 0.0 && 0.0 < iv.hi) {
                return Err(ModelError::BadDomain {
                    index: i % n + 1,
                    lo: iv.lo,
                    hi: iv.hi,
                });
            }
        }
        Ok(LienardSystem {
            name: name.into(),
            n,
            f,
            g,
            omega_box,
            xdomain,
        })
    }

    /// Parse the damping and restoring expressions and build a system on the
    /// box `(-r, r)^n`.
    pub fn from_strs(name: &str, f: &[&str], g: &[&str], r: f64) -> Result<Self, ModelError> {
        let f = f.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>, _>>()?;
        let g = g.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>, _>>()?;
        let n = f.len();
        Self::new(name, f, g, vec![Interval::symmetric(r); n], vec![Interval::symmetric(r); n])
    }

    pub fn builtin(name: &str) -> Result<Self, ModelError> {
        let (f, g): (&[&str], &[&str]) = match name {
            "intro" => (&["(x1 - x2)^2", "(x1 + x2^2)^2"], &["x1", "x2"]),
            "squares" => (
                &["x1^2*(x2 - 1)^2*(x1 + 1)^2", "x2^2*(x1 - 1)^2*(x2 + 1)^2"],
                &["x1", "x2"],
            ),
            "ellipses" => (&["(x1^2 + 2*x2^2 - 1)^2", "(2*x1^2 + x2^2 - 1)^2"], &["x1", "x2"]),
            "cubic" => (
                &["x1^2*(x2 - 1)^2*(x1 + 1)^2", "x2^2*(x1 - 1)^2*(x2 + 1)^2"],
                &["x1^3", "x2^3"],
            ),
            "oscillator" => (&["0", "0"], &["x1", "x2"]),
            other => return Err(ModelError::UnknownBuiltin(other.to_string())),
        };
        Self::from_strs(name, f, g, 5.0)
    }

    pub const BUILTINS: [&'static str; 5] = ["intro", "squares", "ellipses", "cubic", "oscillator"];

    /// Names of damping/restoring terms that are not polynomial.
    pub fn non_polynomial_terms(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, e) in self.f.iter().enumerate() {
            if let Some(node) = e.non_polynomial_node() {
                out.push(format!("f{}: {node}", i + 1));
            }
        }
        for (i, e) in self.g.iter().enumerate() {
            if let Some(node) = e.non_polynomial_node() {
                out.push(format!("g{}: {node}", i + 1));
            }
        }
        out
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.xdomain)
            .zip(&self.omega_box)
            .all(|((v, d), o)| d.contains_open(*v) && o.contains_closed(*v))
    }

    pub fn damping(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        let p = Point::positions(x);
        self.f.iter().map(|e| e.eval(&p)).collect()
    }

    pub fn restoring(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        let p = Point::positions(x);
        self.g.iter().map(|e| e.eval(&p)).collect()
    }

    /// Field on a flat state without the domain check.
    pub(crate) fn field_into(&self, z: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        let n = self.n;
        let (x, y) = z.split_at(n);
        let p = Point::positions(x);
        for i in 0..n {
            let fi = self.f[i].eval(&p)?;
            let gi = self.g[i].eval(&p)?;
            out[i] = y[i];
            out[n + i] = -gi - y[i] * fi;
        }
        Ok(())
    }

    fn check_state(&self, z: &State) -> Result<(), ModelError> {
        if z.x.len() != self.n || z.y.len() != self.n {
            return Err(ModelError::StateDimension {
                expected: self.n,
                got: z.x.len().max(z.y.len()),
            });
        }
        if !self.in_domain(&z.x) || !z.is_finite() {
            return Err(ModelError::OutOfDomain(z.to_flat()));
        }
        Ok(())
    }

    /// `(y, -g(x) - y * f(x))` as a flat `2n` vector.
    pub fn vector_field(&self, z: &State) -> Result<Vec<f64>, ModelError> {
        self.check_state(z)?;
        let mut out = vec![0.0; 2 * self.n];
        self.field_into(&z.to_flat(), &mut out)?;
        Ok(out)
    }

    pub fn perturbed_vector_field(
        &self,
        pert: &Perturbation,
        eps: f64,
        t: f64,
        z: &State,
    ) -> Result<Vec<f64>, ModelError> {
        self.check_state(z)?;
        let mut out = vec![0.0; 2 * self.n];
        let flat = z.to_flat();
        self.field_into(&flat, &mut out)?;
        pert.add_forcing(t, eps, &flat, &mut out)?;
        Ok(out)
    }

    /// `g_i'(0)`, exact for polynomial `g_i`, central difference otherwise.
    pub fn restoring_slopes_at_origin(&self) -> Result<(Vec<f64>, Vec<String>), ModelError> {
        let zero = vec![0.0; self.n];
        let mut slopes = Vec::with_capacity(self.n);
        let mut warnings = Vec::new();
        for (i, gi) in self.g.iter().enumerate() {
            let slope = if gi.is_polynomial() {
                gi.differentiate(Var::X(i))?.eval(&Point::positions(&zero))?
            } else {
                let h = 1e-6;
                let mut xp = zero.clone();
                let mut xm = zero.clone();
                xp[i] = h;
                xm[i] = -h;
                let d = gi
                    .eval(&Point::positions(&xp))
                    .and_then(|a| Ok((a - gi.eval(&Point::positions(&xm))?) / (2.0 * h)))
                    .map_err(|source| ModelError::NonDifferentiable { index: i + 1, source })?;
                warnings.push(format!("g{}'(0) estimated by central difference", i + 1));
                d
            };
            slopes.push(slope);
        }
        Ok((slopes, warnings))
    }

    pub fn linearization_eigenvalues(&self) -> Result<Linearization, ModelError> {
        let (slopes, warnings) = self.restoring_slopes_at_origin()?;
        let damping = self.damping(&vec![0.0; self.n])?;
        let mut eigenvalues = Vec::with_capacity(2 * self.n);
        for (fi, gi) in damping.iter().zip(&slopes) {
            let disc = Complex64::new(fi * fi - 4.0 * gi, 0.0).sqrt();
            eigenvalues.push((-fi + disc) / 2.0);
            eigenvalues.push((-fi - disc) / 2.0);
        }
        let product: f64 = slopes.iter().product();
        let flag = if product.abs() <= 1e-12 {
            LinearizationFlag::Degenerate
        } else if damping.iter().zip(&slopes).any(|(f, g)| f.abs() <= 1e-12 && *g > 0.0) {
            LinearizationFlag::Inconclusive
        } else {
            LinearizationFlag::Clear
        };
        Ok(Linearization {
            damping_at_origin: damping,
            restoring_slopes: slopes,
            eigenvalues,
            flag,
            warnings,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearizationFlag {
    /// All `g_i'(0)` nonzero and no undamped oscillating component.
    Clear,
    /// Some `f_i(0) = 0` with `g_i'(0) > 0`: purely imaginary pair.
    Inconclusive,
    /// `prod g_i'(0) = 0`: the linearization is degenerate.
    Degenerate,
}

impl fmt::Display for LinearizationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinearizationFlag::Clear => "clear",
            LinearizationFlag::Inconclusive => "inconclusive",
            LinearizationFlag::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Linearization {
    pub damping_at_origin: Vec<f64>,
    pub restoring_slopes: Vec<f64>,
    /// Ordered `(lambda_1^+, lambda_1^-, lambda_2^+, ...)`.
    pub eigenvalues: Vec<Complex64>,
    pub flag: LinearizationFlag,
    pub warnings: Vec<String>,
}

/// Periodic forcing `h(t, X, Y, eps)` with period `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub h: Vec<Expr>,
    pub period: f64,
    /// Whether `h` vanishes identically at `eps = 0` on the sampled points.
    pub eps_scaled: bool,
}

impl Perturbation {
    /// `h_i = eps * c_i * cos(2 pi t / T + phi_i)`.
    pub fn cosine(period: f64, amplitudes: &[f64], phases: &[f64]) -> Result<Self, ModelError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(ModelError::BadPeriod(period));
        }
        if phases.len() != amplitudes.len() {
            return Err(ModelError::Arity {
                what: "phases",
                expected: amplitudes.len(),
                got: phases.len(),
            });
        }
        let omega = 2.0 * PI / period;
        let h = amplitudes
            .iter()
            .zip(phases)
            .map(|(&c, &phi)| {
                if c == 0.0 {
                    return Expr::Const(0.0);
                }
                let mut arg = Expr::Mul(Box::new(Expr::Const(omega)), Box::new(Expr::Var(Var::T)));
                if phi != 0.0 {
                    arg = Expr::Add(Box::new(arg), Box::new(Expr::Const(phi)));
                }
                let wave = Expr::Call(crate::expr::Func::Cos, Box::new(arg));
                let scaled = Expr::Mul(Box::new(Expr::Var(Var::Eps)), Box::new(Expr::Const(c)));
                Expr::Mul(Box::new(scaled), Box::new(wave))
            })
            .collect();
        Ok(Perturbation {
            h,
            period,
            eps_scaled: true,
        })
    }

    /// Accept arbitrary forcing expressions after a sampled periodicity check.
    pub fn from_exprs(h: Vec<Expr>, period: f64) -> Result<Self, ModelError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(ModelError::BadPeriod(period));
        }
        let n = h.len();
        for (i, e) in h.iter().enumerate() {
            let bad = e.variables().into_iter().find(|v| match v {
                Var::X(k) | Var::Y(k) => *k >= n,
                Var::T | Var::Eps => false,
            });
            if let Some(var) = bad {
                return Err(ModelError::PerturbationVariable { index: i + 1, var });
            }
        }
        let probes = [-0.73, 0.0, 0.41, 1.3];
        let mut eps_scaled = true;
        for k in 0..16 {
            let t = period * k as f64 / 16.0 + 0.123;
            let x: Vec<f64> = (0..n).map(|j| probes[(j + k) % 4]).collect();
            let y: Vec<f64> = (0..n).map(|j| probes[(j + k + 1) % 4]).collect();
            for (i, e) in h.iter().enumerate() {
                let a = e.eval(&Point::full(&x, &y, t, 0.05))?;
                let b = e.eval(&Point::full(&x, &y, t + period, 0.05))?;
                let gap = (a - b).abs();
                if gap > 1e-9 * (1.0 + a.abs()) {
                    return Err(ModelError::NotPeriodic {
                        index: i + 1,
                        period,
                        t,
                        gap,
                    });
                }
                if e.eval(&Point::full(&x, &y, t, 0.0))? != 0.0 {
                    eps_scaled = false;
                }
            }
        }
        Ok(Perturbation { h, period, eps_scaled })
    }

    pub(crate) fn add_forcing(&self, t: f64, eps: f64, z: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        let n = self.h.len();
        let (x, y) = z.split_at(n);
        let p = Point::full(x, y, t, eps);
        for (i, e) in self.h.iter().enumerate() {
            out[n + i] += e.eval(&p)?;
        }
        Ok(())
    }
}
