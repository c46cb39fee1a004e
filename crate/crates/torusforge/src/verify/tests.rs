use super::*;
use crate::fourier::{Basis, FourierSeries};
use crate::newton::{newton_solve, NewtonConfig, Triple, Variant};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn problem(eta: f64, nu: f64, eps: f64) -> SpinOrbitProblem {
    SpinOrbitProblem::new(GOLDEN, eta, nu, eps)
}

/// `theta(t) = nu t + theta0 + (w0 - nu) / eta (1 - e^{-eta t})`.
fn closed_form(eta: f64, nu: f64, th0: f64, w0: f64, t: f64) -> f64 {
    nu * t + th0 + (w0 - nu) / eta * (1.0 - (-eta * t).exp())
}

fn max_closed_form_error(dt: f64) -> f64 {
    let p = problem(0.1, GOLDEN, 0.0);
    let x0 = [0.4, GOLDEN + 0.3];
    let tr = integrate_spin_orbit(&p, x0, 0.0, 100.0, &IntegrateOptions { dt, stride: 1 }).unwrap();
    tr.times.iter().zip(&tr.theta).map(|(&t, &th)| (th - closed_form(0.1, GOLDEN, x0[0], x0[1], t)).abs()).fold(0.0, f64::max)
}

#[test]
fn unforced_matches_closed_form() {
    assert!(max_closed_form_error(0.01) < 1e-8);
}

#[test]
fn rk4_order_on_the_closed_form() {
    let e1 = max_closed_form_error(0.4);
    let e2 = max_closed_form_error(0.2);
    let order = (e1 / e2).log2();
    assert!(order >= 3.8, "{order} ({e1:e}, {e2:e})");
}

#[test]
fn free_rotation_without_dissipation() {
    let p = problem(0.0, GOLDEN, 0.0);
    let tr = integrate_spin_orbit(&p, [1.0, 0.7], 0.0, 50.0, &IntegrateOptions::default()).unwrap();
    for (&t, &th) in tr.times.iter().zip(&tr.theta) {
        assert!((th - 1.0 - 0.7 * t).abs() < 1e-11);
    }
    assert!(tr.theta_dot.iter().all(|&w| (w - 0.7).abs() < 1e-14));
}

#[test]
fn forced_richardson_order() {
    let p = problem(0.1, GOLDEN, 1e-3);
    let end = |dt: f64| {
        let tr = integrate_spin_orbit(&p, [0.2, GOLDEN], 0.0, 20.0, &IntegrateOptions { dt, stride: 1000 }).unwrap();
        (*tr.theta.last().unwrap(), *tr.theta_dot.last().unwrap())
    };
    let (a, b, c) = (end(0.4), end(0.2), end(0.1));
    let d1 = (a.0 - b.0).hypot(a.1 - b.1);
    let d2 = (b.0 - c.0).hypot(b.1 - c.1);
    assert!((d1 / d2).log2() >= 3.8, "{}", (d1 / d2).log2());
}

#[test]
fn backward_integration_retraces() {
    let p = problem(0.1, GOLDEN, 1e-2);
    let fw = integrate_spin_orbit(&p, [0.2, 0.5], 0.0, 10.0, &IntegrateOptions::default()).unwrap();
    let x1 = [*fw.theta.last().unwrap(), *fw.theta_dot.last().unwrap()];
    let bw = integrate_spin_orbit(&p, x1, 10.0, 0.0, &IntegrateOptions::default()).unwrap();
    assert!((bw.theta.last().unwrap() - 0.2).abs() < 1e-10);
    assert!((bw.theta_dot.last().unwrap() - 0.5).abs() < 1e-10);
    assert!(bw.dt < 0.0);
}

#[test]
fn blowup_is_reported() {
    let p = problem(-50.0, GOLDEN, 0.0);
    let err = integrate_spin_orbit(&p, [0.0, 1.0], 0.0, 10.0, &IntegrateOptions::default()).unwrap_err();
    assert!(matches!(err, VerifyError::StepTooLarge { .. }));
}

#[test]
fn rotation_number_of_unforced_runs() {
    for (nu, x0) in [(GOLDEN, [0.0, GOLDEN]), (GOLDEN, [2.0, -0.4]), (GOLDEN + 0.1, [0.3, 1.5])] {
        let p = problem(0.1, nu, 0.0);
        let tr = integrate_spin_orbit(&p, x0, 0.0, 2000.0, &IntegrateOptions { dt: 0.01, stride: 10 }).unwrap();
        let rho = rotation_number(&tr, 0.5).unwrap();
        assert!((rho.value - nu).abs() <= 1.0 / rho.window, "{rho:?}");
    }
}

#[test]
fn rotation_number_is_insensitive_to_the_start_in_the_basin() {
    let p = problem(0.1, GOLDEN, 1e-2);
    let opts = IntegrateOptions { dt: 0.01, stride: 10 };
    let a = rotation_number(&integrate_spin_orbit(&p, [0.0, GOLDEN], 0.0, 3000.0, &opts).unwrap(), 0.5).unwrap();
    let b = rotation_number(&integrate_spin_orbit(&p, [1.0, GOLDEN + 0.05], 0.0, 3000.0, &opts).unwrap(), 0.5).unwrap();
    assert!((a.value - b.value).abs() <= 2.0 * a.error.max(b.error), "{a:?} {b:?}");
}

#[test]
fn short_window_is_rejected() {
    let p = problem(0.1, GOLDEN, 0.0);
    let tr = integrate_spin_orbit(&p, [0.0, GOLDEN], 0.0, 1000.0, &IntegrateOptions { dt: 0.1, stride: 1 }).unwrap();
    assert!(matches!(rotation_number(&tr, 0.5), Err(VerifyError::WindowTooShort { .. })));
}

fn flat_torus(order: usize) -> TorusEmbedding {
    let z = FourierSeries::zeros(2, order);
    TorusEmbedding { alpha: GOLDEN, phi1: z.clone(), r0: vec![z.clone(), z] }
}

#[test]
fn floquet_exponent_of_the_linear_problem() {
    for eta in [0.1, 0.3] {
        let p = problem(eta, GOLDEN, 0.0);
        let fit = floquet_exponent(&p, &flat_torus(4), 1e-3, 60.0, &IntegrateOptions::default()).unwrap();
        assert!((fit.exponent + eta).abs() < 1e-6, "{} vs {}", fit.exponent, -eta);
        assert!(fit.final_distance < fit.initial_distance);
    }
}

#[test]
fn repulsive_torus_escapes_forward_and_attracts_backward() {
    let p = problem(-0.1, GOLDEN, 0.0);
    let w = flat_torus(4);
    let err = floquet_exponent(&p, &w, 1e-3, 60.0, &IntegrateOptions::default()).unwrap_err();
    assert!(matches!(err, VerifyError::EscapedNeighborhood { .. }));
    let fit = floquet_exponent(&p, &w, 1e-3, -60.0, &IntegrateOptions::default()).unwrap();
    assert!((fit.exponent + 0.1).abs() < 1e-6, "{}", fit.exponent);
}

#[test]
fn distance_to_a_wavy_section() {
    let b = 6;
    let phi1 = FourierSeries::sin_mode(2, b, &[1, 0], 0.05);
    let r1 = &FourierSeries::cos_mode(2, b, &[1, -1], 0.02) + &FourierSeries::zeros(2, b);
    let w = TorusEmbedding { alpha: GOLDEN, phi1, r0: vec![r1, FourierSeries::zeros(2, b)] };
    for (psi, t) in [(0.3, 0.0), (2.0, 1.5), (5.9, -0.7)] {
        let (th, om) = w.point(psi, t);
        assert!(distance_to_torus(&w, t, th + 2.0 * PI, om) < 1e-12);
        let d = distance_to_torus(&w, t, th, om + 1e-4);
        assert!((d - 1e-4).abs() < 2e-6, "{d}");
    }
}

#[test]
fn conjugacy_residual_of_exact_and_perturbed_triples() {
    let b = Basis::get(1, 8);
    let u = VectorFieldJet::linear_model(&b, &[GOLDEN], &[vec![-0.5]]);
    let g = Conjugacy::identity(&b, 1);
    let lam = CounterTerm::zero(1, 1);
    assert_eq!(conjugacy_residual(&g, &u, &lam, &u, 200, 1), 0.0);

    let bump = FourierSeries::sin_mode(1, 8, &[1], 1e-6);
    let gp = Conjugacy::general(vec![bump], g.r0().to_vec(), g.r1().clone()).unwrap();
    let res = conjugacy_residual(&gp, &u, &lam, &u, 200, 1);
    assert!(res > 1e-7 && res < 1e-5, "{res:e}");
}

#[test]
fn newton_result_passes_the_pointwise_check() {
    let b = Basis::get(1, 16);
    let u0 = VectorFieldJet::linear_model(&b, &[GOLDEN], &[vec![-0.1]]);
    let mut v = u0.clone();
    let t = v.tangent[0].const_term() + &FourierSeries::cos_mode(1, 16, &[1], 1e-3);
    v.tangent[0].set_const(t);
    v.normal[0].set_const(FourierSeries::sin_mode(1, 16, &[1], 1e-3));
    v.frame = None;
    let res = newton_solve(&Variant::Moser, &v, &Triple::initial(&Variant::Moser, &u0), &NewtonConfig::default()).unwrap();
    let x = &res.x;
    assert!(conjugacy_residual(&x.g, &x.u, &x.lambda, &v, 500, 7) <= 1e-8);
}

#[test]
fn jet_integration_stays_on_an_invariant_torus() {
    // (alpha, -0.5 r): r = 0 is invariant and theta advances at alpha
    let b = Basis::get(1, 4);
    let u = VectorFieldJet::linear_model(&b, &[GOLDEN], &[vec![-0.5]]);
    let (th, r) = integrate_field(&u, &[0.1], &[0.0], 10.0, 0.01).unwrap();
    assert!((th[0] - 0.1 - 10.0 * GOLDEN).abs() < 1e-12);
    assert_eq!(r[0], 0.0);
    let (_, r) = integrate_field(&u, &[0.1], &[1e-3], 10.0, 0.01).unwrap();
    assert!((r[0] - 1e-3 * (-5.0f64).exp()).abs() < 1e-12);
}

#[test]
fn trajectory_csv_has_one_row_per_sample() {
    let p = problem(0.1, GOLDEN, 0.0);
    let tr = integrate_spin_orbit(&p, [7.0, GOLDEN], 0.0, 1.0, &IntegrateOptions { dt: 0.25, stride: 1 }).unwrap();
    let csv = tr.to_csv().unwrap();
    assert_eq!(csv.lines().count(), tr.times.len() + 1);
    assert!(csv.starts_with("t,theta_mod_2pi,theta,theta_dot"));
}
