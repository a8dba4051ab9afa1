//! Arithmetic expressions over the fixed variable set `x1..xn`, `y1..yn`,
//! `t` and `eps`.
//!
//! Expressions are parsed once and then evaluated many times, so the tree is
//! immutable and evaluation takes `&self`. Polynomial expressions (no division
//! by a variable quantity, no transcendental calls, no negative powers) support
//! exact partial differentiation and single-variable antiderivatives.

mod calculus;
mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use calculus::UnivariatePoly;

/// A variable reference. Position and velocity indices are zero-based here and
/// one-based in the textual syntax (`x1` is `Var::X(0)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
    T,
    Eps,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::T => f.write_str("t"),
            Var::Eps => f.write_str("eps"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { position: usize, name: String },
    #[error("non-integer exponent at position {position}")]
    NonIntegerExponent { position: usize },
    #[error("unbound variable `{0}`")]
    Unbound(Var),
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("non-polynomial node `{0}`")]
    NonPolynomial(String),
    #[error("expression depends on `{found}`, expected a polynomial in `{expected}` only")]
    NotUnivariate { expected: Var, found: Var },
}

/// Source of variable values during evaluation.
pub trait Binding {
    fn value(&self, var: Var) -> Option<f64>;
}

/// Positional binding: `x[i]` binds `x{i+1}` and so on.
#[derive(Debug, Clone, Copy, Default)]
pub struct Point<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub t: Option<f64>,
    pub eps: Option<f64>,
}

impl<'a> Point<'a> {
    pub fn positions(x: &'a [f64]) -> Self {
        Point {
            x,
            ..Default::default()
        }
    }

    pub fn full(x: &'a [f64], y: &'a [f64], t: f64, eps: f64) -> Self {
        Point {
            x,
            y,
            t: Some(t),
            eps: Some(eps),
        }
    }
}

impl Binding for Point<'_> {
    fn value(&self, var: Var) -> Option<f64> {
        match var {
            Var::X(i) => self.x.get(i).copied(),
            Var::Y(i) => self.y.get(i).copied(),
            Var::T => self.t,
            Var::Eps => self.eps,
        }
    }
}

fn lookup_named<'a>(mut get: impl FnMut(&str) -> Option<f64> + 'a, var: Var) -> Option<f64> {
    get(&var.to_string())
}

impl Binding for HashMap<String, f64> {
    fn value(&self, var: Var) -> Option<f64> {
        lookup_named(|k| self.get(k).copied(), var)
    }
}

impl Binding for BTreeMap<String, f64> {
    fn value(&self, var: Var) -> Option<f64> {
        lookup_named(|k| self.get(k).copied(), var)
    }
}

impl<const N: usize> Binding for [(&str, f64); N] {
    fn value(&self, var: Var) -> Option<f64> {
        let name = var.to_string();
        self.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        parse::parse(text)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn eval(&self, b: &impl Binding) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => b.value(*v).ok_or(ExprError::Unbound(*v))?,
            Expr::Neg(a) => -a.eval(b)?,
            Expr::Add(l, r) => l.eval(b)? + r.eval(b)?,
            Expr::Sub(l, r) => l.eval(b)? - r.eval(b)?,
            Expr::Mul(l, r) => l.eval(b)? * r.eval(b)?,
            Expr::Div(l, r) => {
                let num = l.eval(b)?;
                let den = r.eval(b)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(base, k) => {
                let v = base.eval(b)?;
                if v == 0.0 && *k < 0 {
                    return Err(ExprError::DivisionByZero);
                }
                v.powi(*k)
            }
            Expr::Call(func, arg) => {
                let v = arg.eval(b)?;
                match func {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(ExprError::SqrtDomain(v));
                        }
                        v.sqrt()
                    }
                }
            }
        })
    }

    /// Every variable referenced anywhere in the tree.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.variables().is_empty()
    }

    /// First node that prevents exact polynomial treatment, if any.
    pub fn non_polynomial_node(&self) -> Option<String> {
        match self {
            Expr::Const(_) | Expr::Var(_) => None,
            Expr::Neg(a) => a.non_polynomial_node(),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) => {
                l.non_polynomial_node().or_else(|| r.non_polynomial_node())
            }
            Expr::Div(l, r) => {
                if !r.is_constant() {
                    Some("division by a non-constant".into())
                } else {
                    l.non_polynomial_node().or_else(|| r.non_polynomial_node())
                }
            }
            Expr::Pow(a, k) => {
                if *k < 0 {
                    Some(format!("negative power ^{k}"))
                } else {
                    a.non_polynomial_node()
                }
            }
            Expr::Call(f, _) => Some(f.name().to_string()),
        }
    }

    pub fn is_polynomial(&self) -> bool {
        self.non_polynomial_node().is_none()
    }

    pub fn differentiate(&self, var: Var) -> Result<Expr, ExprError> {
        calculus::differentiate(self, var)
    }

    /// Antiderivative in `var` vanishing at `var = 0`.
    pub fn antiderivative(&self, var: Var) -> Result<Expr, ExprError> {
        calculus::antiderivative(self, var)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                // `{:?}` is shortest round-trip and always carries a `.` or exponent.
                write!(f, "{c:?}")
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.fmt_child(f, 4)
            }
            Expr::Add(l, r) | Expr::Sub(l, r) => {
                l.fmt_child(f, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                r.fmt_child(f, 2)
            }
            Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.fmt_child(f, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                r.fmt_child(f, 3)
            }
            Expr::Pow(a, k) => {
                a.fmt_child(f, 5)?;
                if *k < 0 {
                    write!(f, "^({k})")
                } else {
                    write!(f, "^{k}")
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(e: &str, vals: &[(&str, f64)]) -> Result<f64, ExprError> {
        let map: HashMap<String, f64> = vals.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Expr::parse(e)?.eval(&map)
    }

    #[test]
    fn squares_damping_vanishes_on_axis() {
        let v = at("x1^2*(x2-1)^2*(x1+1)^2", &[("x1", 0.0), ("x2", 5.0)]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ellipse_damping_vanishes_on_conic() {
        let v = at("(x1^2 + 2*x2^2 - 1)^2", &[("x1", 1.0), ("x2", 0.0)]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn dangling_operator_reports_position() {
        match Expr::parse("x1 +") {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eval_examples() {
        assert_eq!(at("x1 - x2", &[("x1", 1.0), ("x2", 1.0)]).unwrap(), 0.0);
        assert_eq!(at("0", &[("x1", 3.0)]).unwrap(), 0.0);
        assert_eq!(at("x1^3", &[("x1", 2.0)]).unwrap(), 8.0);
    }

    #[test]
    fn eval_errors() {
        assert_eq!(at("x1/x2", &[("x1", 1.0), ("x2", 0.0)]), Err(ExprError::DivisionByZero));
        assert!(matches!(at("sqrt(x1)", &[("x1", -1.0)]), Err(ExprError::SqrtDomain(_))));
        assert_eq!(at("x1 + y1", &[("x1", 1.0)]), Err(ExprError::Unbound(Var::Y(0))));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            Expr::parse("x1 + zeta"),
            Err(ExprError::UnknownIdentifier { position: 6, .. })
        ));
        assert!(matches!(Expr::parse("x0"), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(Expr::parse("x1^1.5"), Err(ExprError::NonIntegerExponent { position: 4 })));
        assert!(matches!(Expr::parse("x1^x2"), Err(ExprError::NonIntegerExponent { .. })));
        assert!(matches!(Expr::parse(""), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("(x1"), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("x1 x2"), Err(ExprError::Syntax { position: 4, .. })));
    }

    #[test]
    fn precedence_power_over_unary_minus() {
        assert_eq!(at("-x1^2", &[("x1", 3.0)]).unwrap(), -9.0);
        assert_eq!(at("2*-x1", &[("x1", 3.0)]).unwrap(), -6.0);
        assert_eq!(at("1 - 2 - 3", &[]).unwrap(), -4.0);
        assert_eq!(at("8/4/2", &[]).unwrap(), 1.0);
        assert_eq!(at("x1^-2", &[("x1", 2.0)]).unwrap(), 0.25);
        assert_eq!(at("2*pi", &[]).unwrap(), 2.0 * std::f64::consts::PI);
        assert_eq!(at("1.5e2 + .5", &[]).unwrap(), 150.5);
    }

    #[test]
    fn functions_and_time() {
        let v = at("eps*cos(2*t)", &[("eps", 0.1), ("t", 0.0)]).unwrap();
        assert_eq!(v, 0.1);
        assert_eq!(at("abs(-3) + exp(0) + sin(0)", &[]).unwrap(), 4.0);
    }

    #[test]
    fn polynomial_classification() {
        assert!(Expr::parse("x1^2*(x2-1)^2/4").unwrap().is_polynomial());
        assert_eq!(
            Expr::parse("x1/x2").unwrap().non_polynomial_node().as_deref(),
            Some("division by a non-constant")
        );
        assert_eq!(Expr::parse("sin(x1)").unwrap().non_polynomial_node().as_deref(), Some("sin"));
    }

    #[test]
    fn printing_reparses() {
        for src in ["-x1^2", "(x1 - x2) - (x1 - 1)", "x1/(x2*3)", "(-2.5)^3", "--x1", "(x1^2)^3"] {
            let e = Expr::parse(src).unwrap();
            let back = Expr::parse(&e.to_string()).unwrap();
            let p = [("x1", 1.3), ("x2", -0.7)];
            assert_eq!(e.eval(&p).unwrap(), back.eval(&p).unwrap(), "{src} -> {e}");
        }
    }
}
