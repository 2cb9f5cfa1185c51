mod common;

use cklab::activations::{taylor_centered, theta_params, Activation};
use cklab::quadrature::{gaussian_expectation, DEFAULT_TOL};
use proptest::prelude::*;

fn thetas(f: &Activation) -> (f64, f64, f64) {
    let t = theta_params(f, 1.0, DEFAULT_TOL).unwrap();
    (t.theta1, t.theta2, t.theta3)
}

fn close(a: (f64, f64, f64), b: (f64, f64, f64), tol: f64) -> bool {
    (a.0 - b.0).abs() < tol && (a.1 - b.1).abs() < tol && (a.2 - b.2).abs() < tol
}

#[test]
fn closed_form_thetas() {
    assert!(close(thetas(&Activation::identity()), (1.0, 1.0, 0.0), 1e-10));
    let sq = Activation::hermite(&[0.0, 0.0, 1.0 / 2f64.sqrt()]).unwrap();
    assert!(close(thetas(&sq), (1.0, 0.0, 0.5), 1e-10));
    let cubic = Activation::polynomial(vec![0.0, -3.0, 0.0, 1.0]).unwrap();
    assert!(close(thetas(&cubic), (6.0, 0.0, 0.0), 1e-10));
    let normalized = Activation::even_centered_monomial(1, true).unwrap();
    assert!(close(thetas(&normalized), (1.0, 0.0, 0.5), 1e-10));
}

#[test]
fn cos_family_thetas() {
    for alpha in [0.8, 1.0, 1.5, 2.0] {
        let f = Activation::cos_family(alpha).unwrap();
        let (t1, t2, t3) = thetas(&f);
        let a2 = alpha * alpha;
        assert!((t1 - 1.0).abs() < 1e-9, "alpha {alpha}: theta1 {t1}");
        assert!(t2.abs() < 1e-8);
        assert!((t3 - a2 * a2 / (4.0 * (a2.cosh() - 1.0))).abs() < 1e-8, "alpha {alpha}: theta3 {t3}");
        assert!(gaussian_expectation(|z| f.eval(z), DEFAULT_TOL).unwrap().abs() < 1e-8);
    }
    let f1 = Activation::cos_family(1.0).unwrap();
    let e = std::f64::consts::E;
    let expected = (1.0 - (-0.5f64).exp()) / ((1.0 / e) * (1f64.cosh() - 1.0)).sqrt();
    assert!((f1.eval(0.0) - expected).abs() < 1e-12);
    let t = |a| thetas(&Activation::cos_family(a).unwrap()).2;
    assert!(t(0.8) > t(1.5) && t(1.5) > t(2.0));
}

#[test]
fn even_monomials_are_centered() {
    for k in 1..=4 {
        let f = Activation::even_centered_monomial(k, false).unwrap();
        assert!(gaussian_expectation(|z| f.eval(z), DEFAULT_TOL).unwrap().abs() < 1e-8, "k = {k}");
    }
    let f = Activation::even_centered_monomial(1, false).unwrap();
    assert!((f.eval(0.0) + 1.0).abs() < 1e-15);
}

#[test]
fn taylor_constants() {
    let (_, a_sin) = taylor_centered(&[0.0, 1.0, 0.0, -1.0, 0.0]).unwrap();
    assert_eq!(a_sin, 0.0);
    let (p, a_exp) = taylor_centered(&[1.0; 5]).unwrap();
    assert!((a_exp - (1.0 + 0.5 + 3.0 / 24.0)).abs() < 1e-15);
    assert!(gaussian_expectation(|z| p.eval(z), DEFAULT_TOL).unwrap().abs() < 1e-8);
}

#[test]
fn uncentered_is_reported_and_fixed() {
    let f = Activation::polynomial(vec![0.0, 0.0, 1.0]).unwrap();
    assert!(!f.is_centered_for(1.0));
    let g = f.centered(1.0).unwrap();
    assert!(g.is_centered_for(1.0));
    assert!((g.eval(0.0) + 1.0).abs() < 1e-12);
}

#[test]
fn non_smooth_activation_outside_hypotheses() {
    assert!(!Activation::relu().within_theorem_hypotheses());
    assert!(Activation::tanh().within_theorem_hypotheses());
}

#[test]
fn scale_enters_through_sigma() {
    // θ(f, σ) equals θ of x ↦ f(σx) at σ = 1.
    let sigma = 1.7;
    let f = Activation::hermite(&[0.0, 0.3, 0.5, 0.2]).unwrap().centered(sigma).unwrap();
    let at_sigma = theta_params(&f, sigma, DEFAULT_TOL).unwrap();
    let g2 = f.clone();
    let g = Activation::custom("scaled", true, move |x| g2.eval(sigma * x));
    // Finite-difference derivatives cap the attainable quadrature tolerance.
    let at_one = theta_params(&g, 1.0, 1e-6).unwrap();
    assert!((at_sigma.theta1 - at_one.theta1).abs() < 1e-9);
    assert!((at_sigma.theta2 - at_one.theta2).abs() < 1e-6);
    assert!((at_sigma.theta3 - at_one.theta3).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hermite_mixtures_obey_stein_bounds(c in prop::collection::vec(-1.0f64..1.0, 1..7)) {
        let mut h = vec![0.0];
        h.extend(c);
        let f = Activation::hermite(&h).unwrap();
        let t = theta_params(&f, 1.0, DEFAULT_TOL).unwrap();
        let (o1, o2, o3) = common::hermite_thetas(&h);
        let scale = o1.max(1.0);
        prop_assert!((t.theta1 - o1).abs() < 1e-10 * scale);
        prop_assert!((t.theta2 - o2).abs() < 1e-10 * scale);
        prop_assert!((t.theta3 - o3).abs() < 1e-10 * scale);
        prop_assert!(t.satisfies_stein_bounds(1e-10));
    }
}
