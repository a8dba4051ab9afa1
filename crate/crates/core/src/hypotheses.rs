//! Sampled and root-finding checks of the four sufficient conditions:
//!
//! 1. `x g_i(x) > 0` away from 0 on `(a_i, b_i)`;
//! 2. `f_i >= 0` on the damping box;
//! 3. for every subset `S`, `{x_i = 0, i in S} ∩ {f_j = 0, j not in S}` is a set
//!    of isolated points;
//! 4. `∩ {f_i = 0}` is a set of isolated points (the `S = ∅` case of 3).
//!
//! Constraint sets are solved by box subdivision with a Lipschitz exclusion
//! test, Levenberg-Marquardt polishing of the surviving leaves, and a sphere
//! probe around every root that looks for nearby zeros.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, ExprError, Point, Var};
use crate::linalg::levenberg_marquardt;
use crate::model::{Interval, LienardSystem};

pub const MAX_DIMENSION: usize = 12;

#[derive(Debug, Error)]
pub enum HypothesisError {
    #[error("dimension {0} exceeds the subset enumeration limit of {MAX_DIMENSION}")]
    TooManySubsets(usize),
    #[error("damping term f{index} is not polynomial ({node}); constraint sets need exact derivatives")]
    NonPolynomialDamping { index: usize, node: String },
    #[error("search box must have {expected} intervals, got {got}")]
    BoxArity { expected: usize, got: usize },
    #[error("subset mask {mask:#b} has bits outside 1..={n}")]
    BadMask { mask: u32, n: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone)]
struct Equation {
    value: Expr,
    grad: Vec<Expr>,
    hess: Vec<Vec<Expr>>,
}

impl Equation {
    fn new(value: Expr, n: usize) -> Result<Self, ExprError> {
        let grad = (0..n).map(|i| value.differentiate(Var::X(i))).collect::<Result<Vec<_>, _>>()?;
        let hess = grad
            .iter()
            .map(|g| (0..n).map(|j| g.differentiate(Var::X(j))).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Equation { value, grad, hess })
    }

    fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.value.eval(&Point::positions(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        let p = Point::positions(x);
        self.grad.iter().map(|g| g.eval(&p)).collect()
    }

    /// `f / |grad f|` and its gradient. For `f = q^k` with `q` a simple zero
    /// this is `q / (k |grad q|)`, a signed distance estimate that stays
    /// linear regardless of the multiplicity `k`.
    fn normalized(&self, x: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        let p = Point::positions(x);
        let f = self.value.eval(&p)?;
        let g: Vec<f64> = self.grad.iter().map(|e| e.eval(&p)).collect::<Result<_, _>>()?;
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            let d = if f == 0.0 { 0.0 } else { f.signum() * 1e150 };
            return Ok((d, vec![0.0; x.len()]));
        }
        let n = x.len();
        let mut hg = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                hg[i] += self.hess[i][j].eval(&p)? * g[j];
            }
        }
        let d = f / gn;
        let grad_d = (0..n).map(|i| g[i] / gn - f * hg[i] / (gn * gn * gn)).collect();
        Ok((d, grad_d))
    }
}

/// The square system `x_i = 0 (i in S)`, `f_j = 0 (j not in S)`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub mask: u32,
    pub n: usize,
    equations: Vec<Equation>,
}

impl ConstraintSet {
    pub fn new(sys: &LienardSystem, mask: u32) -> Result<Self, HypothesisError> {
        let n = sys.n;
        if n > MAX_DIMENSION {
            return Err(HypothesisError::TooManySubsets(n));
        }
        if mask >> n != 0 {
            return Err(HypothesisError::BadMask { mask, n });
        }
        ensure_polynomial(sys)?;
        let equations = (0..n)
            .map(|i| {
                let e = if mask & (1 << i) != 0 {
                    Expr::Var(Var::X(i))
                } else {
                    sys.f[i].clone()
                };
                Equation::new(e, n)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConstraintSet { mask, n, equations })
    }

    /// Only the damping equations `f_j = 0` for the listed zero-based indices.
    pub(crate) fn damping_only(sys: &LienardSystem, indices: &[usize]) -> Result<Self, HypothesisError> {
        ensure_polynomial(sys)?;
        let equations = indices
            .iter()
            .map(|&j| Equation::new(sys.f[j].clone(), sys.n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConstraintSet {
            mask: 0,
            n: sys.n,
            equations,
        })
    }

    /// One-based members of `S`.
    pub fn subset(&self) -> Vec<usize> {
        subset_members(self.mask, self.n)
    }

    pub fn residual(&self, x: &[f64]) -> Result<f64, ExprError> {
        let mut worst: f64 = 0.0;
        for e in &self.equations {
            worst = worst.max(e.eval(x)?.abs());
        }
        Ok(worst)
    }

    fn raw_system(&self, x: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = self.equations.len();
        let xs = x.as_slice();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, self.n);
        for (k, e) in self.equations.iter().enumerate() {
            r[k] = e.eval(xs).ok()?;
            for (c, v) in e.gradient(xs).ok()?.into_iter().enumerate() {
                j[(k, c)] = v;
            }
        }
        r.iter().chain(j.iter()).all(|v| v.is_finite()).then_some((r, j))
    }

    fn normalized_system(&self, x: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = self.equations.len();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, self.n);
        for (k, e) in self.equations.iter().enumerate() {
            let (d, g) = e.normalized(x.as_slice()).ok()?;
            r[k] = d;
            for (c, v) in g.into_iter().enumerate() {
                j[(k, c)] = v;
            }
        }
        r.iter().chain(j.iter()).all(|v| v.is_finite()).then_some((r, j))
    }

    fn normalized_max(&self, x: &[f64]) -> f64 {
        self.equations
            .iter()
            .map(|e| e.normalized(x).map(|(d, _)| d.abs()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    /// Drive `x` onto the zero set: damped least squares on the raw
    /// equations, then on the multiplicity-normalized equations.
    pub(crate) fn polish(&self, x0: &[f64]) -> Vec<f64> {
        let stage1 = levenberg_marquardt(|x| self.raw_system(x), DVector::from_row_slice(x0), 100, 1e-15);
        let stage2 = levenberg_marquardt(|x| self.normalized_system(x), stage1.x, 60, 1e-16);
        stage2.x.as_slice().to_vec()
    }
}

fn ensure_polynomial(sys: &LienardSystem) -> Result<(), HypothesisError> {
    for (i, f) in sys.f.iter().enumerate() {
        if let Some(node) = f.non_polynomial_node() {
            return Err(HypothesisError::NonPolynomialDamping { index: i + 1, node });
        }
    }
    Ok(())
}

pub fn subset_members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).collect()
}

/// `S = {1, 3}` style label.
pub fn subset_label(mask: u32, n: usize) -> String {
    let members: Vec<String> = subset_members(mask, n).iter().map(|i| i.to_string()).collect();
    if members.is_empty() {
        "S = {}".to_string()
    } else {
        format!("S = {{{}}}", members.join(","))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RootOptions {
    /// Every reported root satisfies `max_j |equation_j| < root_tol`.
    pub root_tol: f64,
    pub cluster_radius: f64,
    /// Leaf cells are at most `box width * min_cell_fraction` wide.
    pub min_cell_fraction: f64,
    pub depth_cap: u32,
    pub max_cells: usize,
    pub max_leaves: usize,
    pub max_probed_roots: usize,
    pub probe_radii: Vec<f64>,
    pub probe_samples: usize,
    /// Quadratic clearance constant in `residual > theta r^2`.
    pub theta: f64,
    /// Visit the upper half of each bisected cell first.
    pub upper_first: bool,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            root_tol: 1e-9,
            cluster_radius: 1e-5,
            min_cell_fraction: 1.0 / 1024.0,
            depth_cap: 40,
            max_cells: 200_000,
            max_leaves: 20_000,
            max_probed_roots: 64,
            probe_radii: vec![1e-2, 1e-3, 1e-4],
            probe_samples: 16,
            theta: 1e-3,
            upper_first: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IsolationVerdict {
    Isolated,
    SuspectedContinuum,
    Inconclusive,
}

impl fmt::Display for IsolationVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IsolationVerdict::Isolated => "isolated",
            IsolationVerdict::SuspectedContinuum => "suspected_continuum",
            IsolationVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub verdict: IsolationVerdict,
    pub radii: Vec<f64>,
    /// Smallest normalized residual reached on each sphere.
    pub min_residuals: Vec<f64>,
    /// Sphere point attaining the smallest residual at the last radius.
    pub closest_point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Root {
    pub point: Vec<f64>,
    pub residual: f64,
    pub isolation: Option<ProbeResult>,
}

impl Root {
    pub fn verdict(&self) -> IsolationVerdict {
        self.isolation
            .as_ref()
            .map_or(IsolationVerdict::Inconclusive, |p| p.verdict)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RootFinding {
    pub mask: u32,
    pub subset: Vec<usize>,
    pub label: String,
    pub roots: Vec<Root>,
    /// Aggregate over all roots; `isolated` also requires a complete search.
    pub verdict: IsolationVerdict,
    pub budget_exhausted: bool,
    /// More roots than `max_probed_roots`; only an evenly spaced subset was probed.
    pub probes_truncated: bool,
    pub cells_processed: usize,
    pub leaves: usize,
    pub search_box: Vec<Interval>,
}

struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
    depth: u32,
}

impl Cell {
    fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    fn widest_axis(&self) -> (usize, f64) {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| b - a)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, w)| if w > best.1 { (i, w) } else { best })
    }

    /// Center plus corners (or axis points in high dimension) for gradient sampling.
    fn gradient_samples(&self) -> Vec<Vec<f64>> {
        let n = self.lo.len();
        let c = self.center();
        let mut out = vec![c.clone()];
        if n <= 6 {
            for corner in 0..(1usize << n) {
                out.push((0..n).map(|i| if corner & (1 << i) != 0 { self.hi[i] } else { self.lo[i] }).collect());
            }
        } else {
            for i in 0..n {
                for end in [self.lo[i], self.hi[i]] {
                    let mut p = c.clone();
                    p[i] = end;
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Whether some equation provably (up to the sampled Lipschitz bound) has no
/// zero in the cell.
fn excluded(set: &ConstraintSet, cell: &Cell) -> Result<bool, ExprError> {
    let c = cell.center();
    let diam = cell.diameter();
    let samples = cell.gradient_samples();
    for e in &set.equations {
        let v = e.eval(&c)?.abs();
        if v == 0.0 {
            continue;
        }
        let mut lip: f64 = 0.0;
        for p in &samples {
            let g = e.gradient(p)?;
            lip = lip.max(g.iter().map(|a| a * a).sum::<f64>().sqrt());
        }
        if v > lip * diam {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn solve_constraint_set(
    sys: &LienardSystem,
    mask: u32,
    search_box: &[Interval],
    opts: &RootOptions,
) -> Result<RootFinding, HypothesisError> {
    let set = ConstraintSet::new(sys, mask)?;
    let n = sys.n;
    if search_box.len() != n {
        return Err(HypothesisError::BoxArity {
            expected: n,
            got: search_box.len(),
        });
    }
    let min_width = search_box.iter().map(Interval::width).fold(0.0, f64::max) * opts.min_cell_fraction;

    let mut stack = vec![Cell {
        lo: search_box.iter().map(|b| b.lo).collect(),
        hi: search_box.iter().map(|b| b.hi).collect(),
        depth: 0,
    }];
    let mut leaves: Vec<Vec<f64>> = Vec::new();
    let mut processed = 0usize;
    let mut exhausted = false;
    while let Some(cell) = stack.pop() {
        processed += 1;
        if processed > opts.max_cells || leaves.len() > opts.max_leaves {
            exhausted = true;
            stack.push(cell);
            break;
        }
        if excluded(&set, &cell)? {
            continue;
        }
        let (axis, width) = cell.widest_axis();
        if width <= min_width || cell.depth >= opts.depth_cap {
            leaves.push(cell.center());
            continue;
        }
        let mid = 0.5 * (cell.lo[axis] + cell.hi[axis]);
        let mut lower = Cell {
            lo: cell.lo.clone(),
            hi: cell.hi.clone(),
            depth: cell.depth + 1,
        };
        lower.hi[axis] = mid;
        let mut upper = Cell {
            lo: cell.lo,
            hi: cell.hi,
            depth: cell.depth + 1,
        };
        upper.lo[axis] = mid;
        if opts.upper_first {
            stack.push(lower);
            stack.push(upper);
        } else {
            stack.push(upper);
            stack.push(lower);
        }
    }

    let mut seeds = leaves;
    if exhausted {
        seeds.extend(stack.iter().map(Cell::center));
        seeds = evenly_spaced(seeds, 32);
    }
    let leaf_count = seeds.len();

    let inside = |x: &[f64]| {
        x.iter().zip(search_box).all(|(v, b)| {
            let slack = 1e-9 * b.width();
            b.lo - slack <= *v && *v <= b.hi + slack
        })
    };
    let mut candidates: Vec<(Vec<f64>, f64)> = seeds
        .par_iter()
        .filter_map(|s| {
            let x = set.polish(s);
            let res = set.residual(&x).ok()?;
            (res < opts.root_tol && inside(&x)).then_some((x, res))
        })
        .collect();

    // Merge within the clustering radius, keeping the smaller residual.
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| lex_cmp(&a.0, &b.0)));
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
    for (x, r) in candidates {
        if kept.iter().all(|(k, _)| dist(k, &x) > opts.cluster_radius) {
            kept.push((x, r));
        }
    }
    kept.sort_by(|a, b| lex_cmp(&a.0, &b.0));

    let probe_all = kept.len() <= opts.max_probed_roots;
    let probe_idx: Vec<usize> = if probe_all {
        (0..kept.len()).collect()
    } else {
        evenly_spaced((0..kept.len()).collect(), 16)
    };
    let probes: Vec<Option<ProbeResult>> = (0..kept.len())
        .into_par_iter()
        .map(|i| probe_idx.contains(&i).then(|| isolation_probe_set(&set, &kept[i].0, opts)))
        .collect();
    let roots: Vec<Root> = kept
        .into_iter()
        .zip(probes)
        .map(|((point, residual), isolation)| Root {
            point,
            residual,
            isolation,
        })
        .collect();

    let verdict = if roots.iter().any(|r| r.verdict() == IsolationVerdict::SuspectedContinuum) {
        IsolationVerdict::SuspectedContinuum
    } else if exhausted || !probe_all || roots.iter().any(|r| r.verdict() != IsolationVerdict::Isolated) {
        IsolationVerdict::Inconclusive
    } else {
        IsolationVerdict::Isolated
    };

    Ok(RootFinding {
        mask,
        subset: set.subset(),
        label: subset_label(mask, n),
        roots,
        verdict,
        budget_exhausted: exhausted,
        probes_truncated: !probe_all,
        cells_processed: processed,
        leaves: leaf_count,
        search_box: search_box.to_vec(),
    })
}

fn evenly_spaced<T>(items: Vec<T>, count: usize) -> Vec<T> {
    if items.len() <= count {
        return items;
    }
    let len = items.len();
    let picks: Vec<usize> = (0..count).map(|k| k * len / count).collect();
    items
        .into_iter()
        .enumerate()
        .filter(|(i, _)| picks.contains(i))
        .map(|(_, v)| v)
        .collect()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Deterministic unit directions: evenly spaced angles in the plane,
/// seeded Gaussian directions plus the coordinate axes otherwise.
fn sphere_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    if n == 2 {
        return (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut u = vec![0.0; n];
            u[i] = s;
            dirs.push(u);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x15_01a7ed);
    while dirs.len() < count.max(2 * n) {
        let u: Vec<f64> = (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
                (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
            })
            .collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        dirs.push(u.into_iter().map(|v| v / norm).collect());
    }
    dirs
}

/// Minimize the normalized residual over the sphere `|x - center| = r`
/// starting from `center + r u`; returns the final point and its residual.
fn minimize_on_sphere(set: &ConstraintSet, center: &[f64], r: f64, u0: &[f64]) -> (Vec<f64>, f64) {
    let n = center.len();
    let point = |u: &DVector<f64>| -> Vec<f64> { (0..n).map(|i| center[i] + r * u[i]).collect() };
    let mut u = DVector::from_row_slice(u0);
    let mut x = point(&u);
    let Some((mut res, mut jac)) = set.normalized_system(&DVector::from_row_slice(&x)) else {
        return (x, f64::INFINITY);
    };
    let mut cost = res.norm_squared();
    let mut mu = 1e-6;
    for _ in 0..60 {
        if cost == 0.0 {
            break;
        }
        let proj = DMatrix::identity(n, n) - &u * u.transpose();
        let jt = &jac * &proj * r;
        let a = jt.transpose() * &jt;
        let g = jt.transpose() * &res;
        let mut improved = false;
        for _ in 0..25 {
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] += mu;
            }
            let Some(delta) = m.lu().solve(&(-&g)) else {
                mu *= 4.0;
                continue;
            };
            let delta = &proj * delta;
            let cand = &u + &delta;
            let cand = &cand / cand.norm();
            let xc = point(&cand);
            if let Some((rc, jc)) = set.normalized_system(&DVector::from_row_slice(&xc)) {
                let cc = rc.norm_squared();
                if cc < cost {
                    u = cand;
                    x = xc;
                    res = rc;
                    jac = jc;
                    cost = cc;
                    mu = (mu / 5.0).max(1e-300);
                    improved = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    let value = set.normalized_max(&x);
    (x, value)
}

fn isolation_probe_set(set: &ConstraintSet, root: &[f64], opts: &RootOptions) -> ProbeResult {
    let dirs = sphere_directions(root.len(), opts.probe_samples);
    let mut min_residuals = Vec::with_capacity(opts.probe_radii.len());
    let mut closest_point = root.to_vec();
    for &r in &opts.probe_radii {
        let mut best = f64::INFINITY;
        for u in &dirs {
            let (x, v) = minimize_on_sphere(set, root, r, u);
            if v < best {
                best = v;
                closest_point = x;
            }
        }
        min_residuals.push(best);
    }
    let isolated = opts
        .probe_radii
        .iter()
        .zip(&min_residuals)
        .all(|(r, m)| *m > opts.theta * r * r);
    let continuum = min_residuals.iter().all(|m| *m < opts.root_tol);
    let verdict = if isolated {
        IsolationVerdict::Isolated
    } else if continuum {
        IsolationVerdict::SuspectedContinuum
    } else {
        IsolationVerdict::Inconclusive
    };
    ProbeResult {
        verdict,
        radii: opts.probe_radii.clone(),
        min_residuals,
        closest_point,
    }
}

/// Sphere probe around `root` for the constraint set of subset `mask`.
pub fn isolation_probe(
    sys: &LienardSystem,
    mask: u32,
    root: &[f64],
    opts: &RootOptions,
) -> Result<ProbeResult, HypothesisError> {
    let set = ConstraintSet::new(sys, mask)?;
    Ok(isolation_probe_set(&set, root, opts))
}

#[derive(Debug, Clone, Serialize)]
pub struct H1Witness {
    pub axis: usize,
    pub x: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct H1Report {
    pub pass: bool,
    pub samples_per_side: usize,
    pub witness: Option<H1Witness>,
}

/// `x g_i(x) > 0` at `grid_density` samples on each side of 0, positive side first.
pub fn check_h1(sys: &LienardSystem, grid_density: usize) -> H1Report {
    let density = grid_density.max(1);
    let mut pos = vec![0.0; sys.n];
    for (i, (g, dom)) in sys.g.iter().zip(&sys.xdomain).enumerate() {
        for end in [dom.hi, dom.lo] {
            for k in 1..=density {
                let x = end * (k as f64 - 0.5) / density as f64;
                pos[i] = x;
                let gv = g.eval(&Point::positions(&pos)).unwrap_or(f64::NAN);
                if !(x * gv > 0.0) {
                    return H1Report {
                        pass: false,
                        samples_per_side: density,
                        witness: Some(H1Witness { axis: i + 1, x, g: gv }),
                    };
                }
            }
        }
        pos[i] = 0.0;
    }
    H1Report {
        pass: true,
        samples_per_side: density,
        witness: None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct H2Witness {
    pub index: usize,
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct H2Report {
    pub pass: bool,
    pub grid_density: usize,
    pub witness: Option<H2Witness>,
}

/// `f_i >= -1e-12` on a full grid over the damping box.
pub fn check_h2(sys: &LienardSystem, grid_density: usize) -> H2Report {
    let n = sys.n;
    let m = crate::lyapunov::capped_density(grid_density.max(2), n, 2_000_000);
    let total = m.pow(n as u32);
    let first_bad = (0..total).into_par_iter().find_first(|&flat| {
        let x = omega_grid_point(sys, flat, m);
        sys.f.iter().any(|f| !(f.eval(&Point::positions(&x)).unwrap_or(f64::NAN) >= -1e-12))
    });
    let witness = first_bad.map(|flat| {
        let x = omega_grid_point(sys, flat, m);
        let (index, value) = sys
            .f
            .iter()
            .enumerate()
            .map(|(i, f)| (i + 1, f.eval(&Point::positions(&x)).unwrap_or(f64::NAN)))
            .find(|(_, v)| !(*v >= -1e-12))
            .expect("grid point was flagged");
        H2Witness { index, x, value }
    });
    H2Report {
        pass: witness.is_none(),
        grid_density: m,
        witness,
    }
}

fn omega_grid_point(sys: &LienardSystem, mut flat: usize, m: usize) -> Vec<f64> {
    sys.omega_box
        .iter()
        .map(|b| {
            let k = flat % m;
            flat /= m;
            b.lo + b.width() * k as f64 / (m - 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

impl From<IsolationVerdict> for Verdict {
    fn from(v: IsolationVerdict) -> Self {
        match v {
            IsolationVerdict::Isolated => Verdict::Pass,
            IsolationVerdict::SuspectedContinuum => Verdict::Fail,
            IsolationVerdict::Inconclusive => Verdict::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOptions {
    pub grid_density: usize,
    pub roots: RootOptions,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            grid_density: 201,
            roots: RootOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub system: String,
    pub verdict: Verdict,
    pub h1: H1Report,
    pub h2: H2Report,
    /// Worst verdict over the nonempty subsets.
    pub h3: Verdict,
    /// The `S = ∅` subset.
    pub h4: Verdict,
    /// One entry per subset mask, in mask order.
    pub subsets: Vec<RootFinding>,
    pub search_box: Vec<Interval>,
}

fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    verdicts.into_iter().fold(Verdict::Pass, |acc, v| match (acc, v) {
        (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
        _ => Verdict::Pass,
    })
}

/// All four conditions; `S` ranges over every subset of `{1..n}`.
pub fn check_all(sys: &LienardSystem, opts: &CheckOptions) -> Result<HypothesisReport, HypothesisError> {
    let n = sys.n;
    if n > MAX_DIMENSION {
        return Err(HypothesisError::TooManySubsets(n));
    }
    ensure_polynomial(sys)?;
    let h1 = check_h1(sys, opts.grid_density);
    let h2 = check_h2(sys, opts.grid_density);
    let subsets = (0..(1u32 << n))
        .into_par_iter()
        .map(|mask| solve_constraint_set(sys, mask, &sys.omega_box, &opts.roots))
        .collect::<Result<Vec<_>, _>>()?;
    let h4 = Verdict::from(subsets[0].verdict);
    let h3 = combine(subsets[1..].iter().map(|s| Verdict::from(s.verdict)));
    let part = |pass: bool| if pass { Verdict::Pass } else { Verdict::Fail };
    let verdict = combine([part(h1.pass), part(h2.pass), h3, h4]);
    Ok(HypothesisReport {
        system: sys.name.clone(),
        verdict,
        h1,
        h2,
        h3,
        h4,
        subsets,
        search_box: sys.omega_box.clone(),
    })
}
