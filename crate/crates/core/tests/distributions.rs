use cklab::distributions::{moment_summary, EntryDistribution, Law};
use proptest::prelude::*;

fn raw_moment(xs: &[f64], p: i32) -> f64 {
    xs.iter().map(|x| x.powi(p)).sum::<f64>() / xs.len() as f64
}

#[test]
fn rademacher_support() {
    let m = EntryDistribution::rademacher().sample_matrix(2, 2, 7);
    for j in 0..2 {
        for i in 0..2 {
            assert!(m[(i, j)] == 1.0 || m[(i, j)] == -1.0);
        }
    }
}

#[test]
fn gaussian_sample_variance() {
    let m = EntryDistribution::standard_gaussian().sample_matrix(1_000_000, 1, 3);
    let xs = m.col_as_slice(0);
    assert!((raw_moment(xs, 2) - 1.0).abs() < 0.01);
    assert!(raw_moment(xs, 1).abs() < 5.0 / 1000.0);
}

#[test]
fn mixture_fourth_moment() {
    let d = EntryDistribution::rademacher_gaussian_mixture(0.25).unwrap();
    let m = d.sample_matrix(1_000_000, 1, 11);
    let mu4 = raw_moment(m.col_as_slice(0), 4);
    assert!((mu4 - 2.5).abs() < 0.05, "{mu4}");
}

#[test]
fn kappa_values() {
    assert_eq!(EntryDistribution::rademacher().kappa(), 0.0);
    assert_eq!(EntryDistribution::standard_gaussian().kappa(), 2.0);
    assert!((EntryDistribution::rademacher_gaussian_mixture(0.25).unwrap().kappa() - 1.5).abs() < 1e-15);
    assert!((EntryDistribution::rademacher_gaussian_mixture(0.5).unwrap().kappa() - 1.0).abs() < 1e-15);
}

#[test]
fn invalid_laws_rejected() {
    assert!(EntryDistribution::gaussian(0.0).is_err());
    assert!(EntryDistribution::rademacher_gaussian_mixture(1.5).is_err());
    assert!(EntryDistribution::table(vec![(1.0, 0.5), (0.0, 0.5)]).is_err());
    assert!(EntryDistribution::table(vec![(1.0, 0.6), (-1.0, 0.6)]).is_err());
    assert!(EntryDistribution::new(Law::Gaussian { variance: f64::NAN }).is_err());
}

#[test]
fn spec_strings_round_trip() {
    for s in ["gaussian(var=2)", "rademacher", "mix(0.25*rademacher+0.75*gaussian)", "table(-1:0.5,1:0.5)"] {
        let d: EntryDistribution = s.parse().unwrap();
        let again: EntryDistribution = d.to_string().parse().unwrap();
        assert_eq!(d, again, "{s}");
    }
}

#[test]
fn same_seed_same_matrix() {
    let d = EntryDistribution::rademacher_gaussian_mixture(0.5).unwrap();
    assert_eq!(d.sample_matrix(30, 20, 99), d.sample_matrix(30, 20, 99));
    assert_ne!(d.sample_matrix(30, 20, 99), d.sample_matrix(30, 20, 100));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Symmetric tables: κ = μ₄/σ⁴ − 1 ≥ 0, and exact moments agree with a
    // direct weighted sum.
    #[test]
    fn table_moments(points in prop::collection::vec((0.01f64..5.0, 0.01f64..1.0), 1..6)) {
        let total: f64 = points.iter().map(|p| p.1).sum();
        let mut table = Vec::new();
        for &(v, w) in &points {
            table.push((v, 0.5 * w / total));
            table.push((-v, 0.5 * w / total));
        }
        let d = EntryDistribution::table(table.clone()).unwrap();
        let var: f64 = table.iter().map(|(v, p)| p * v * v).sum();
        let mu4: f64 = table.iter().map(|(v, p)| p * v.powi(4)).sum();
        let s = moment_summary(d.law()).unwrap();
        prop_assert!((s.variance - var).abs() < 1e-12 * var.max(1.0));
        prop_assert!((s.kappa - (mu4 / (var * var) - 1.0)).abs() < 1e-9);
        prop_assert!(s.kappa >= -1e-12);
    }
}
