use super::{Expr, ExprError, Var};

fn non_poly(e: &Expr) -> ExprError {
    ExprError::NonPolynomial(e.non_polynomial_node().unwrap_or_else(|| e.to_string()))
}

fn konst(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn pow(base: Expr, k: i32) -> Expr {
    match (k, &base) {
        (0, _) => Expr::Const(1.0),
        (1, _) => base,
        (_, Expr::Const(c)) => Expr::Const(c.powi(k)),
        _ => Expr::Pow(Box::new(base), k),
    }
}

pub(super) fn differentiate(e: &Expr, var: Var) -> Result<Expr, ExprError> {
    Ok(match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(differentiate(a, var)?),
        Expr::Add(l, r) => add(differentiate(l, var)?, differentiate(r, var)?),
        Expr::Sub(l, r) => add(differentiate(l, var)?, neg(differentiate(r, var)?)),
        Expr::Mul(l, r) => add(
            mul(differentiate(l, var)?, (**r).clone()),
            mul((**l).clone(), differentiate(r, var)?),
        ),
        Expr::Div(l, r) => {
            if !r.is_constant() {
                return Err(non_poly(e));
            }
            let dl = differentiate(l, var)?;
            if konst(&dl) == Some(0.0) {
                Expr::Const(0.0)
            } else {
                Expr::Div(Box::new(dl), r.clone())
            }
        }
        Expr::Pow(base, k) => {
            if *k < 0 {
                return Err(non_poly(e));
            }
            let db = differentiate(base, var)?;
            mul(mul(Expr::Const(*k as f64), pow((**base).clone(), k - 1)), db)
        }
        Expr::Call(..) => return Err(non_poly(e)),
    })
}

/// Dense coefficients `c[k]` of `sum c[k] * var^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariatePoly {
    pub var: Var,
    pub coeffs: Vec<f64>,
}

impl UnivariatePoly {
    fn constant(var: Var, c: f64) -> Self {
        UnivariatePoly { var, coeffs: vec![c] }
    }

    /// Expand `e` as a polynomial in `var`; any other variable is an error.
    pub fn from_expr(e: &Expr, var: Var) -> Result<Self, ExprError> {
        Ok(match e {
            Expr::Const(c) => Self::constant(var, *c),
            Expr::Var(v) if *v == var => UnivariatePoly {
                var,
                coeffs: vec![0.0, 1.0],
            },
            Expr::Var(v) => {
                return Err(ExprError::NotUnivariate {
                    expected: var,
                    found: *v,
                })
            }
            Expr::Neg(a) => Self::from_expr(a, var)?.scale(-1.0),
            Expr::Add(l, r) => Self::from_expr(l, var)?.plus(&Self::from_expr(r, var)?, 1.0),
            Expr::Sub(l, r) => Self::from_expr(l, var)?.plus(&Self::from_expr(r, var)?, -1.0),
            Expr::Mul(l, r) => Self::from_expr(l, var)?.times(&Self::from_expr(r, var)?),
            Expr::Div(l, r) => {
                if !r.is_constant() {
                    return Err(non_poly(e));
                }
                let den = r.eval(&super::Point::default())?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                Self::from_expr(l, var)?.scale(1.0 / den)
            }
            Expr::Pow(base, k) => {
                if *k < 0 {
                    return Err(non_poly(e));
                }
                let b = Self::from_expr(base, var)?;
                let mut acc = Self::constant(var, 1.0);
                for _ in 0..*k {
                    acc = acc.times(&b);
                }
                acc
            }
            Expr::Call(..) => return Err(non_poly(e)),
        })
    }

    fn scale(mut self, s: f64) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
        self
    }

    fn plus(mut self, other: &Self, sign: f64) -> Self {
        if other.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += sign * b;
        }
        self
    }

    fn times(&self, other: &Self) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        UnivariatePoly { var: self.var, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Term-by-term integral with zero constant term.
    pub fn integral(&self) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len() + 1];
        for (k, c) in self.coeffs.iter().enumerate() {
            coeffs[k + 1] = c / (k as f64 + 1.0);
        }
        UnivariatePoly { var: self.var, coeffs }
    }

    /// Sum of monomials, lowest degree first, zero terms dropped.
    pub fn to_expr(&self) -> Expr {
        let mut out: Option<Expr> = None;
        for (k, c) in self.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let term = mul(Expr::Const(*c), pow(Expr::Var(self.var), k as i32));
            out = Some(match out {
                None => term,
                Some(acc) => Expr::Add(Box::new(acc), Box::new(term)),
            });
        }
        out.unwrap_or(Expr::Const(0.0))
    }
}

pub(super) fn antiderivative(e: &Expr, var: Var) -> Result<Expr, ExprError> {
    Ok(UnivariatePoly::from_expr(e, var)?.integral().to_expr())
}
