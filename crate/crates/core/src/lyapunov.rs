//! The energy function `V(Z) = sum_i G_i(x_i) + y_i^2 / 2` with
//! `G_i(x) = int_0^x g_i(s) ds`, its orbital derivative
//! `V'(Z) = -sum_i y_i^2 f_i(X)`, and grid-based sublevel certification.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, ExprError, Point, Var};
use crate::model::{Interval, LienardSystem, State};

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("adaptive quadrature of g{axis} on [0, {upper}] did not reach tolerance")]
    Quadrature { axis: usize, upper: f64 },
    #[error("box must have {expected} intervals (positions then velocities), got {got}")]
    BoxArity { expected: usize, got: usize },
    #[error("box axis {axis} [{lo}, {hi}] is not inside the system domain or does not contain 0")]
    BoxOutsideDomain { axis: usize, lo: f64, hi: f64 },
    #[error("state has dimension {got}, system expects {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum Primitive {
    /// Exact antiderivative of a polynomial `g_i`.
    Exact(Expr),
    /// Adaptive Simpson quadrature of a non-polynomial `g_i`.
    Quadrature(Expr),
}

#[derive(Debug, Clone)]
pub struct LyapunovData {
    system: LienardSystem,
    primitives: Vec<Primitive>,
}

impl LyapunovData {
    pub fn new(sys: &LienardSystem) -> Result<Self, LyapunovError> {
        let primitives = sys
            .g
            .iter()
            .enumerate()
            .map(|(i, g)| {
                Ok(if g.is_polynomial() {
                    Primitive::Exact(g.antiderivative(Var::X(i))?)
                } else {
                    Primitive::Quadrature(g.clone())
                })
            })
            .collect::<Result<Vec<_>, LyapunovError>>()?;
        Ok(LyapunovData {
            system: sys.clone(),
            primitives,
        })
    }

    pub fn system(&self) -> &LienardSystem {
        &self.system
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// `G_i(x)`.
    pub fn primitive(&self, axis: usize, x: f64) -> Result<f64, LyapunovError> {
        let n = self.system.n;
        match &self.primitives[axis] {
            Primitive::Exact(e) => {
                let mut pos = vec![0.0; n];
                pos[axis] = x;
                Ok(e.eval(&Point::positions(&pos))?)
            }
            Primitive::Quadrature(g) => {
                let mut pos = vec![0.0; n];
                let mut eval = |s: f64| -> Result<f64, ExprError> {
                    pos[axis] = s;
                    g.eval(&Point::positions(&pos))
                };
                adaptive_simpson(&mut eval, 0.0, x, QUAD_TOL)?.ok_or(LyapunovError::Quadrature {
                    axis: axis + 1,
                    upper: x,
                })
            }
        }
    }

    pub(crate) fn v_flat(&self, z: &[f64]) -> Result<f64, LyapunovError> {
        let n = self.system.n;
        let mut v = 0.0;
        for i in 0..n {
            v += self.primitive(i, z[i])? + 0.5 * z[n + i] * z[n + i];
        }
        Ok(v)
    }

    pub(crate) fn vdot_flat(&self, z: &[f64]) -> Result<f64, LyapunovError> {
        let n = self.system.n;
        let f = self.system.damping(&z[..n])?;
        Ok(-f.iter().zip(&z[n..]).map(|(fi, yi)| yi * yi * fi).sum::<f64>())
    }

    fn check_dim(&self, z: &State) -> Result<(), LyapunovError> {
        if z.x.len() != self.system.n || z.y.len() != self.system.n {
            return Err(LyapunovError::StateDimension {
                expected: self.system.n,
                got: z.x.len().max(z.y.len()),
            });
        }
        Ok(())
    }

    pub fn v(&self, z: &State) -> Result<f64, LyapunovError> {
        self.check_dim(z)?;
        self.v_flat(&z.to_flat())
    }

    /// `-sum y_i^2 f_i(X)`, from the closed formula.
    pub fn vdot(&self, z: &State) -> Result<f64, LyapunovError> {
        self.check_dim(z)?;
        self.vdot_flat(&z.to_flat())
    }

    /// Sampled check that `G_i` is nonincreasing on `(a_i, 0)` and
    /// nondecreasing on `(0, b_i)`. Returns the first offending axis and point.
    pub fn primitives_monotone(&self, samples: usize) -> Result<Option<(usize, f64)>, LyapunovError> {
        for (i, dom) in self.system.xdomain.iter().enumerate() {
            for end in [dom.hi, dom.lo] {
                let mut prev = 0.0;
                for k in 1..samples {
                    let x = end * k as f64 / samples as f64;
                    let g = self.primitive(i, x)?;
                    if g - prev < -1e-14 * (1.0 + g.abs()) {
                        return Ok(Some((i, x)));
                    }
                    prev = g;
                }
            }
        }
        Ok(None)
    }

    /// Sample `V` on a grid over the closed ball of radius `radius` in
    /// `(X, Y)` space, origin excluded.
    pub fn check_positive_definite(&self, radius: f64, grid_density: usize) -> PositiveDefiniteReport {
        let dim = 2 * self.system.n;
        let density = capped_density(grid_density.max(3), dim, 4_000_000);
        let at_origin = self.v_flat(&vec![0.0; dim]).unwrap_or(f64::NAN);
        let total = density.pow(dim as u32);
        let step = 2.0 * radius / (density - 1) as f64;
        let samples: Vec<Option<(f64, Vec<f64>)>> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let z = grid_point(flat, density, dim, |_, k| -radius + step * k as f64);
                let r = crate::model::norm(&z);
                if r == 0.0 || r > radius * (1.0 + 1e-12) {
                    return None;
                }
                Some((self.v_flat(&z).unwrap_or(f64::NAN), z))
            })
            .collect();
        let mut min_value = f64::INFINITY;
        let mut min_point = Vec::new();
        let mut sampled = 0usize;
        let mut violation = None;
        for (v, z) in samples.into_iter().flatten() {
            sampled += 1;
            if !(v > 0.0) && violation.is_none() {
                violation = Some(z.clone());
            }
            if v < min_value || v.is_nan() {
                min_value = v;
                min_point = z;
            }
        }
        PositiveDefiniteReport {
            pass: at_origin == 0.0 && violation.is_none(),
            value_at_origin: at_origin,
            min_value,
            min_point,
            violation,
            radius,
            grid_density: density,
            samples: sampled,
        }
    }

    /// Largest level `c` from a geometric sequence starting at the boundary
    /// minimum of `V` such that the grid component of `{V < c}` containing
    /// the origin avoids the box boundary and has `V' <= 0` at every node.
    ///
    /// `bounds` lists positions first, then velocities.
    pub fn estimate_roa_level(&self, bounds: &[Interval], resolution: usize) -> Result<RoaReport, LyapunovError> {
        let n = self.system.n;
        let dim = 2 * n;
        if bounds.len() != dim {
            return Err(LyapunovError::BoxArity {
                expected: dim,
                got: bounds.len(),
            });
        }
        for (axis, b) in bounds.iter().enumerate() {
            let inside = if axis < n {
                let d = self.system.xdomain[axis];
                let o = self.system.omega_box[axis];
                d.lo < b.lo && b.hi < d.hi && o.contains_closed(b.lo) && o.contains_closed(b.hi)
            } else {
                true
            };
            if !inside || !(b.lo < 0.0 && 0.0 < b.hi) {
                return Err(LyapunovError::BoxOutsideDomain {
                    axis: axis + 1,
                    lo: b.lo,
                    hi: b.hi,
                });
            }
        }
        let m = capped_density(resolution.max(3), dim, 3_000_000);
        let total = m.pow(dim as u32);
        let coord = |axis: usize, k: usize| bounds[axis].lo + bounds[axis].width() * k as f64 / (m - 1) as f64;
        let values: Vec<(f64, f64)> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let z = grid_point(flat, m, dim, coord);
                let v = self.v_flat(&z)?;
                let vd = self.vdot_flat(&z)?;
                Ok((v, vd))
            })
            .collect::<Result<_, LyapunovError>>()?;

        let on_boundary = |flat: usize| grid_index(flat, m, dim).iter().any(|&k| k == 0 || k == m - 1);
        let boundary_min = (0..total)
            .filter(|&f| on_boundary(f))
            .map(|f| values[f].0)
            .fold(f64::INFINITY, f64::min);

        let origin_idx: Vec<usize> = bounds
            .iter()
            .map(|b| ((-b.lo) / b.width() * (m - 1) as f64).round() as usize)
            .collect();
        let origin_flat = origin_idx.iter().rev().fold(0usize, |acc, &k| acc * m + k);

        let mut rejections = Vec::new();
        let mut level = 0.0;
        let mut component_points = 0;
        let mut worst_vdot = f64::NAN;
        let mut certified = false;
        let mut accepted = false;
        let mut c = boundary_min;
        for _ in 0..MAX_LEVELS {
            match flood_fill(&values, origin_flat, m, dim, c, &on_boundary) {
                Fill::Accepted { points, worst } => {
                    level = c;
                    component_points = points;
                    worst_vdot = worst;
                    certified = points > 1;
                    accepted = true;
                    break;
                }
                Fill::Rejected(r) => {
                    let point = grid_point(r.node, m, dim, coord);
                    rejections.push(RoaRejection {
                        level: c,
                        reason: r.reason,
                        vdot: values[r.node].1,
                        point,
                    });
                }
            }
            c *= LEVEL_FACTOR;
        }
        let spacing = bounds.iter().map(|b| b.width() / (m - 1) as f64).collect();
        Ok(RoaReport {
            level,
            certified,
            boundary_min,
            resolution: m,
            spacing,
            component_points,
            worst_vdot,
            levels_tried: rejections.len() + usize::from(accepted),
            rejections,
            bounds: bounds.to_vec(),
        })
    }
}

const MAX_LEVELS: usize = 200;
const LEVEL_FACTOR: f64 = 0.9;

fn adaptive_simpson(
    f: &mut impl FnMut(f64) -> Result<f64, ExprError>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Option<f64>, ExprError> {
    if a == b {
        return Ok(Some(0.0));
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &mut impl FnMut(f64) -> Result<f64, ExprError>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<Option<f64>, ExprError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (m - a).abs() < 1e-15 {
        return Ok(Some(left + right + delta / 15.0));
    }
    if depth == 0 {
        return Ok(None);
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l.zip(r).map(|(l, r)| l + r))
}

/// Largest per-axis count `<= density` keeping `count^dim <= max_points`.
pub(crate) fn capped_density(density: usize, dim: usize, max_points: usize) -> usize {
    let mut d = density;
    while d > 3 && (d as f64).powi(dim as i32) > max_points as f64 {
        d -= 1;
    }
    d
}

fn grid_index(mut flat: usize, m: usize, dim: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(dim);
    for _ in 0..dim {
        idx.push(flat % m);
        flat /= m;
    }
    idx
}

fn grid_point(flat: usize, m: usize, dim: usize, coord: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    grid_index(flat, m, dim).into_iter().enumerate().map(|(a, k)| coord(a, k)).collect()
}

struct Rejection {
    node: usize,
    reason: RejectReason,
}

enum Fill {
    Accepted { points: usize, worst: f64 },
    Rejected(Rejection),
}

fn flood_fill(
    values: &[(f64, f64)],
    start: usize,
    m: usize,
    dim: usize,
    level: f64,
    on_boundary: &impl Fn(usize) -> bool,
) -> Fill {
    let mut seen = vec![false; values.len()];
    let mut queue = VecDeque::new();
    if values[start].0 < level {
        seen[start] = true;
        queue.push_back(start);
    }
    let mut points = 0;
    let mut worst = f64::NEG_INFINITY;
    let strides: Vec<usize> = (0..dim).map(|a| m.pow(a as u32)).collect();
    while let Some(node) = queue.pop_front() {
        if on_boundary(node) {
            return Fill::Rejected(Rejection {
                node,
                reason: RejectReason::ReachesBoundary,
            });
        }
        let vd = values[node].1;
        if !(vd <= 0.0) {
            return Fill::Rejected(Rejection {
                node,
                reason: RejectReason::PositiveDerivative,
            });
        }
        points += 1;
        worst = worst.max(vd);
        for &stride in &strides {
            let k = (node / stride) % m;
            let mut visit = |next: usize| {
                if !seen[next] && values[next].0 < level {
                    seen[next] = true;
                    queue.push_back(next);
                }
            };
            if k > 0 {
                visit(node - stride);
            }
            if k + 1 < m {
                visit(node + stride);
            }
        }
    }
    Fill::Accepted { points, worst }
}

#[derive(Debug, Clone, Serialize)]
pub struct PositiveDefiniteReport {
    pub pass: bool,
    pub value_at_origin: f64,
    pub min_value: f64,
    pub min_point: Vec<f64>,
    /// First sampled point with `V <= 0`.
    pub violation: Option<Vec<f64>>,
    pub radius: f64,
    pub grid_density: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ReachesBoundary,
    PositiveDerivative,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoaRejection {
    pub level: f64,
    pub reason: RejectReason,
    pub vdot: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoaReport {
    /// Certified sublevel value; meaningful only when `certified`.
    pub level: f64,
    /// False when the accepted component is just the origin node.
    pub certified: bool,
    pub boundary_min: f64,
    /// Grid nodes per axis.
    pub resolution: usize,
    pub spacing: Vec<f64>,
    pub component_points: usize,
    /// Largest `V'` over the accepted component.
    pub worst_vdot: f64,
    pub levels_tried: usize,
    pub rejections: Vec<RoaRejection>,
    pub bounds: Vec<Interval>,
}
