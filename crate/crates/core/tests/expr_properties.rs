use lienard::expr::{Expr, Func, Var};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-3.0..3.0f64).prop_map(|c| Expr::Const((c * 100.0).round() / 100.0)),
        (0..3usize).prop_map(|i| Expr::Var(Var::X(i))),
    ]
}

/// Random polynomial in `x1..x3`: sums, products, small powers and
/// division by nonzero constants.
fn polynomial() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), 0..4i32).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
            (inner, prop_oneof![Just(2.0), Just(-4.0), Just(0.5)])
                .prop_map(|(a, c)| Expr::Div(Box::new(a), Box::new(Expr::Const(c)))),
        ]
    })
}

/// Any expression the printer can emit, transcendental calls included.
fn general() -> impl Strategy<Value = Expr> {
    polynomial().prop_recursive(2, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Call(Func::Sin, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Cos, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Abs, Box::new(a))),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
        ]
    })
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-2.0..2.0f64)
}

fn at(e: &Expr, p: &[f64; 3]) -> f64 {
    e.eval(&[("x1", p[0]), ("x2", p[1]), ("x3", p[2])]).unwrap()
}

fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn derivative_matches_central_difference(e in polynomial(), p in point(), axis in 0..3usize) {
        let d = e.differentiate(Var::X(axis)).unwrap();
        let h = 1e-6;
        let (mut lo, mut hi) = (p, p);
        lo[axis] -= h;
        hi[axis] += h;
        let fd = (at(&e, &hi) - at(&e, &lo)) / (2.0 * h);
        let exact = at(&d, &p);
        // Cancellation in the difference quotient limits the attainable
        // accuracy to roughly eps_machine * |e| / h.
        let noise = 1e-9 * (at(&e, &p).abs() + 1.0);
        prop_assert!(close(exact, fd, 1e-5, noise / 1e-5), "{e}: exact {exact} fd {fd}");
    }

    #[test]
    fn antiderivative_then_derivative_is_identity(e in polynomial(), axis in 0..3usize) {
        // Univariate antiderivatives need a polynomial in the axis variable only.
        let others: Vec<(String, f64)> = (0..3).filter(|i| *i != axis).map(|i| (format!("x{}", i + 1), 0.0)).collect();
        let mut env: std::collections::BTreeMap<String, f64> = others.into_iter().collect();
        let uni = substitute_zero_except(&e, axis);
        let back = uni.antiderivative(Var::X(axis)).unwrap().differentiate(Var::X(axis)).unwrap();
        for k in 0..100 {
            let x = -2.0 + 4.0 * k as f64 / 99.0;
            env.insert(format!("x{}", axis + 1), x);
            let a = uni.eval(&env).unwrap();
            let b = back.eval(&env).unwrap();
            prop_assert!(close(a, b, 1e-12, 1.0), "{uni} vs {back} at {x}: {a} {b}");
        }
    }

    #[test]
    fn print_parse_round_trip(e in general(), pts in prop::collection::vec(point(), 100)) {
        let text = e.to_string();
        let back = Expr::parse(&text).unwrap();
        for p in &pts {
            let (a, b) = (at(&e, p), at(&back, p));
            prop_assert!(a == b || (a.is_nan() && b.is_nan()), "{text}: {a} vs {b}");
        }
    }
}

/// Replace every variable except `x_{axis+1}` by zero.
fn substitute_zero_except(e: &Expr, axis: usize) -> Expr {
    let rec = |x: &Expr| Box::new(substitute_zero_except(x, axis));
    match e {
        Expr::Var(Var::X(i)) if *i != axis => Expr::Const(0.0),
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => Expr::Neg(rec(a)),
        Expr::Add(a, b) => Expr::Add(rec(a), rec(b)),
        Expr::Sub(a, b) => Expr::Sub(rec(a), rec(b)),
        Expr::Mul(a, b) => Expr::Mul(rec(a), rec(b)),
        Expr::Div(a, b) => Expr::Div(rec(a), rec(b)),
        Expr::Pow(a, k) => Expr::Pow(rec(a), *k),
        Expr::Call(f, a) => Expr::Call(*f, rec(a)),
    }
}
