use std::f64::consts::PI;

use lienard::expr::Var;
use lienard::integrate::{integrate, integrate_perturbed, IntegratorOptions, Termination};
use lienard::lyapunov::{LyapunovData, Primitive};
use lienard::{LienardSystem, Perturbation, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn builtin(name: &str) -> LienardSystem {
    LienardSystem::builtin(name).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, r: f64) -> State {
    State::new(
        (0..n).map(|_| rng.gen_range(-r..r)).collect(),
        (0..n).map(|_| rng.gen_range(-r..r)).collect(),
    )
}

#[test]
fn field_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in LienardSystem::BUILTINS {
        let sys = builtin(name);
        assert!(sys.vector_field(&State::origin(2)).unwrap().iter().all(|v| *v == 0.0), "{name}");
        for _ in 0..20 {
            let mut z = random_state(&mut rng, 2, 2.0);
            z.y = vec![0.0; 2];
            let field = sys.vector_field(&z).unwrap();
            let g = sys.restoring(&z.x).unwrap();
            assert_eq!(&field[..2], &[0.0, 0.0]);
            assert_eq!(field[2], -g[0]);
            assert_eq!(field[3], -g[1]);
        }
    }
}

#[test]
fn unforced_perturbation_matches_field() {
    let sys = builtin("squares");
    let pert = Perturbation::cosine(PI, &[1.0, 0.5], &[0.0, 1.0]).unwrap();
    assert!(pert.eps_scaled);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let z = random_state(&mut rng, 2, 2.0);
        let t = rng.gen_range(0.0..10.0);
        assert_eq!(
            sys.perturbed_vector_field(&pert, 0.0, t, &z).unwrap(),
            sys.vector_field(&z).unwrap()
        );
    }
}

#[test]
fn vdot_chain_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for name in ["intro", "squares", "ellipses", "cubic"] {
        let sys = builtin(name);
        let ld = LyapunovData::new(&sys).unwrap();
        // dV/dx_i by differentiating the stored primitives independently of g.
        let grads: Vec<_> = ld
            .primitives()
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                Primitive::Exact(e) => e.differentiate(Var::X(i)).unwrap(),
                Primitive::Quadrature(_) => unreachable!("polynomial builtins"),
            })
            .collect();
        for _ in 0..1000 {
            let z = random_state(&mut rng, 2, 3.0);
            let field = sys.vector_field(&z).unwrap();
            let mut terms = Vec::new();
            for i in 0..2 {
                let gx = grads[i].eval(&[(format!("x{}", i + 1).as_str(), z.x[i])]).unwrap();
                terms.push(gx * field[i]);
                terms.push(z.y[i] * field[2 + i]);
            }
            let dot: f64 = terms.iter().sum();
            let scale: f64 = terms.iter().map(|v| v.abs()).sum();
            let vdot = ld.vdot(&z).unwrap();
            assert!((dot - vdot).abs() <= 1e-10 * scale.max(1e-300), "{name} {z:?}: {dot} vs {vdot}");
        }
    }
}

#[test]
fn vdot_matches_difference_quotient_along_trajectory() {
    let sys = builtin("ellipses");
    let ld = LyapunovData::new(&sys).unwrap();
    let tr = integrate(
        &sys,
        &State::new(vec![0.4, -0.3], vec![0.2, 0.5]),
        (0.0, 20.0),
        &IntegratorOptions::default(),
    )
    .unwrap();
    let h = 1e-4;
    let mut checked = 0;
    for k in 0..200 {
        let t = 0.1 + 19.8 * k as f64 / 199.0;
        let z = tr.sample_dense(t).unwrap();
        let vdot = ld.vdot(&z).unwrap();
        if vdot.abs() < 1e-6 {
            continue;
        }
        let fd = (ld.v(&tr.sample_dense(t + h).unwrap()).unwrap() - ld.v(&tr.sample_dense(t - h).unwrap()).unwrap()) / (2.0 * h);
        assert!((fd - vdot).abs() <= 1e-4 * vdot.abs(), "t = {t}: {fd} vs {vdot}");
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn energy_is_monotone_on_dissipative_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for name in ["intro", "squares", "ellipses", "cubic"] {
        let sys = builtin(name);
        for _ in 0..5 {
            let z = random_state(&mut rng, 2, 0.8);
            let tr = integrate(&sys, &z, (0.0, 50.0), &IntegratorOptions::default()).unwrap();
            assert!(tr.max_v_increase() <= 1e-8, "{name}: {}", tr.max_v_increase());
        }
    }
}

#[test]
fn energy_is_conserved_without_damping() {
    let sys = builtin("oscillator");
    let ld = LyapunovData::new(&sys).unwrap();
    let z0 = State::new(vec![1.0, -0.5], vec![0.3, 0.8]);
    let tr = integrate(&sys, &z0, (0.0, 100.0), &IntegratorOptions::default()).unwrap();
    let v0 = ld.v(&z0).unwrap();
    assert!(tr.v.iter().all(|v| (v - v0).abs() < 1e-7));
}

#[test]
fn observed_order_is_at_least_four() {
    let sys = builtin("oscillator");
    let z0 = State::new(vec![1.0, 0.0], vec![0.0, 1.0]);
    let t1: f64 = 10.0;
    let exact = [t1.cos(), t1.sin(), -t1.sin(), t1.cos()];
    let run = |tol: f64| {
        let mut opts = IntegratorOptions::with_tolerances(tol, tol).without_early_stop();
        opts.max_step = Some(1.0);
        let tr = integrate(&sys, &z0, (0.0, t1), &opts).unwrap();
        let end = tr.states.last().unwrap();
        let err = end.iter().zip(exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (err, tr.stats.accepted as f64)
    };
    let (e1, n1) = run(1e-5);
    let (e2, n2) = run(1e-9);
    let order = (e1 / e2).ln() / (n2 / n1).ln();
    assert!(order >= 4.0, "observed order {order} ({e1:e} with {n1} steps, {e2:e} with {n2} steps)");
}

#[test]
fn time_reversal_on_conservative_systems() {
    let cubic = LienardSystem::from_strs("hard spring", &["0", "0"], &["x1 + x1^3", "x2"], 5.0).unwrap();
    for sys in [builtin("oscillator"), cubic] {
        let z0 = State::new(vec![0.7, -0.2], vec![0.1, 0.9]);
        let opts = IntegratorOptions::default().without_early_stop();
        let fwd = integrate(&sys, &z0, (0.0, 10.0), &opts).unwrap().final_state();
        let flipped = State::new(fwd.x.clone(), fwd.y.iter().map(|v| -v).collect());
        let back = integrate(&sys, &flipped, (0.0, 10.0), &opts).unwrap().final_state();
        let back = State::new(back.x, back.y.iter().map(|v| -v).collect());
        for (a, b) in back.to_flat().iter().zip(z0.to_flat()) {
            assert!((a - b).abs() < 1e-6, "{}: {a} vs {b}", sys.name);
        }
    }
}

#[test]
fn forced_flow_commutes_with_period_shift() {
    let sys = builtin("squares");
    let pert = Perturbation::cosine(PI, &[1.0, 0.3], &[0.0, 0.5]).unwrap();
    let z0 = State::new(vec![0.2, -0.1], vec![0.0, 0.3]);
    let opts = IntegratorOptions::default().without_early_stop();
    let a = integrate_perturbed(&sys, &pert, 0.1, &z0, (0.0, 4.0), &opts).unwrap();
    let b = integrate_perturbed(&sys, &pert, 0.1, &z0, (PI, PI + 4.0), &opts).unwrap();
    for (u, v) in a.final_state().to_flat().iter().zip(b.final_state().to_flat()) {
        assert!((u - v).abs() < 1e-8, "{u} vs {v}");
    }
}

#[test]
fn forced_response_stays_small() {
    let sys = builtin("squares");
    let pert = Perturbation::cosine(2.0 * PI, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
    let opts = IntegratorOptions::default().without_early_stop();
    let tr = integrate_perturbed(&sys, &pert, 0.1, &State::origin(2), (0.0, 200.0), &opts).unwrap();
    assert_eq!(tr.termination, Termination::TEnd);
    let sup = tr.states.iter().map(|z| State::from_flat(z).norm()).fold(0.0, f64::max);
    // Resonant forcing of a weakly damped oscillator: the response grows
    // until the cubic damping balances it, far below the unit scale.
    assert!(sup > 0.0 && sup < 10.0 * 0.1, "{sup}");
}
