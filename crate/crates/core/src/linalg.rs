use nalgebra::{DMatrix, DVector};

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    pub cost: f64,
}

/// Levenberg-Marquardt on `|r(x)|^2`. `eval` returns the residual and its
/// Jacobian, or `None` where the model cannot be evaluated. Works for
/// square and underdetermined systems (minimum-norm steps).
pub(crate) fn levenberg_marquardt<F>(mut eval: F, x0: DVector<f64>, max_iter: usize, step_tol: f64) -> LmOutcome
where
    F: FnMut(&DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    let mut x = x0;
    let Some((mut r, mut j)) = eval(&x) else {
        return LmOutcome { x, cost: f64::INFINITY };
    };
    let mut cost = r.norm_squared();
    let mut mu = {
        let jtj = j.transpose() * &j;
        let scale = jtj.diagonal().max();
        if scale > 0.0 {
            1e-6 * scale
        } else {
            1e-6
        }
    };
    for _ in 0..max_iter {
        if cost == 0.0 {
            break;
        }
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * &r;
        let mut accepted = None;
        for _ in 0..30 {
            let mut m = a.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += mu;
            }
            let Some(delta) = m.lu().solve(&(-&g)) else {
                mu *= 4.0;
                continue;
            };
            let candidate = &x + &delta;
            if let Some((rn, jn)) = eval(&candidate) {
                let cn = rn.norm_squared();
                if cn < cost {
                    accepted = Some((candidate, rn, jn, cn, delta.norm()));
                    break;
                }
            }
            mu *= 4.0;
        }
        let Some((xn, rn, jn, cn, step)) = accepted else {
            break;
        };
        x = xn;
        r = rn;
        j = jn;
        cost = cn;
        mu = (mu / 5.0).max(1e-300);
        if step <= step_tol * (1.0 + x.norm()) {
            break;
        }
    }
    LmOutcome { x, cost }
}
