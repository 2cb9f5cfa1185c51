//! Gauss-Hermite quadrature for expectations under the standard Gaussian.
//!
//! Nodes come from the Jacobi matrix (Golub-Welsch) and are then polished by
//! Newton steps on the orthonormal Hermite recurrence. Weights are computed
//! from the recurrence in log-scaled form rather than from eigenvector
//! components, so that tail weights keep full relative accuracy; that matters
//! for the high-degree polynomial activations whose integrands grow like
//! `x⁶⁰` in the tails.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen;

/// First rule tried by [`gaussian_expectation`].
pub const START_NODES: usize = 64;
/// Largest rule [`gaussian_expectation`] doubles up to.
pub const MAX_NODES: usize = 1024;
/// Default convergence tolerance between successive doublings.
pub const DEFAULT_TOL: f64 = 1e-10;

/// A rule `E[g(N)] ≈ Σ wᵢ g(xᵢ)` for `N ~ 𝒩(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Orthonormal physicists' Hermite values `(p_n(t), p_{n-1}(t))` scaled by
/// `exp(-log_scale)`.
fn scaled_recurrence(n: usize, t: f64) -> (f64, f64, f64) {
    const BIG: f64 = 1e150;
    let mut p_prev = 0.0;
    let mut p = std::f64::consts::PI.powf(-0.25);
    let mut log_scale = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let next = t * (2.0 / jf).sqrt() * p - ((jf - 1.0) / jf).sqrt() * p_prev;
        p_prev = p;
        p = next;
        if p.abs() > BIG {
            p /= BIG;
            p_prev /= BIG;
            log_scale += BIG.ln();
        }
    }
    (p, p_prev, log_scale)
}

impl GaussHermite {
    /// Build the `n`-point rule (`n ≥ 1`).
    pub fn new(n: usize) -> Result<Self> {
        assert!(n >= 1, "rule needs at least one node");
        let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
        let eig = tridiagonal_eigen(&vec![0.0; n], &off, &[])?;
        let nf = n as f64;
        // Positive half (plus zero when n is odd), mirrored afterwards so the
        // rule is exactly symmetric.
        let half: Vec<f64> = eig.values[n / 2..].to_vec();
        let mut pos = Vec::with_capacity(half.len());
        for mut t in half {
            if n % 2 == 1 && t.abs() < 1e-6 {
                t = 0.0;
            } else {
                for _ in 0..3 {
                    let (p, p_prev, _) = scaled_recurrence(n, t);
                    let dp = (2.0 * nf).sqrt() * p_prev;
                    t -= p / dp;
                }
            }
            let (_, p_prev, log_scale) = scaled_recurrence(n, t);
            let log_dp = (2.0 * nf).sqrt().ln() + p_prev.abs().ln() + log_scale;
            let w = (std::f64::consts::LN_2 - 2.0 * log_dp).exp() / std::f64::consts::PI.sqrt();
            pos.push((t * std::f64::consts::SQRT_2, w));
        }
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for &(x, w) in pos.iter().rev() {
            if x > 0.0 {
                nodes.push(-x);
                weights.push(w);
            }
        }
        for &(x, w) in pos.iter() {
            nodes.push(x);
            weights.push(w);
        }
        Ok(Self { nodes, weights })
    }

    /// `Σ wᵢ g(xᵢ)`, skipping nodes whose weight underflowed to zero.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        // Pairs from the tails inward so small contributions are not absorbed.
        let n = self.nodes.len();
        let term = |k: usize| {
            let w = self.weights[k];
            if w > 0.0 {
                w * g(self.nodes[k])
            } else {
                0.0
            }
        };
        let mut sum = 0.0;
        for i in 0..n / 2 {
            sum += term(i) + term(n - 1 - i);
        }
        if n % 2 == 1 {
            sum += term(n / 2);
        }
        sum
    }
}

static RULES: [OnceLock<GaussHermite>; 5] = [
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
];

/// Cached rule for `n ∈ {64, 128, 256, 512, 1024}`, built on demand otherwise.
pub fn rule(n: usize) -> Result<std::borrow::Cow<'static, GaussHermite>> {
    let slot = match n {
        64 => Some(0),
        128 => Some(1),
        256 => Some(2),
        512 => Some(3),
        1024 => Some(4),
        _ => None,
    };
    match slot {
        Some(i) => {
            if let Some(r) = RULES[i].get() {
                return Ok(std::borrow::Cow::Borrowed(r));
            }
            let built = GaussHermite::new(n)?;
            Ok(std::borrow::Cow::Borrowed(RULES[i].get_or_init(|| built)))
        }
        None => Ok(std::borrow::Cow::Owned(GaussHermite::new(n)?)),
    }
}

/// `E[g(N)]` for `N ~ 𝒩(0, 1)` with node doubling from [`START_NODES`] to
/// [`MAX_NODES`]. Converged when successive estimates differ by less than
/// `tol · max(1, |estimate|)`.
pub fn gaussian_expectation(g: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let mut estimates: Vec<f64> = Vec::new();
    let mut n = START_NODES;
    while n <= MAX_NODES {
        let current = rule(n)?.integrate(&g);
        if let Some(&previous) = estimates.last() {
            if current.is_finite() && (current - previous).abs() < tol * current.abs().max(1.0) {
                return Ok(current);
            }
        }
        estimates.push(current);
        n *= 2;
    }
    let k = estimates.len();
    Err(Error::Quadrature { nodes: MAX_NODES, last: estimates[k - 1], previous: estimates[k - 2] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial_odd(k: u32) -> f64 {
        (1..=k).map(|j| (2 * j - 1) as f64).product()
    }

    #[test]
    fn rule_is_normalized_and_symmetric() {
        for n in [1, 2, 5, 64, 1024] {
            let r = GaussHermite::new(n).unwrap();
            assert_eq!(r.nodes.len(), n);
            let total: f64 = r.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-13, "n = {n}: weights sum to {total}");
            for i in 0..n {
                assert_eq!(r.nodes[i], -r.nodes[n - 1 - i]);
            }
        }
    }

    #[test]
    fn small_rules_match_known_nodes() {
        let r = GaussHermite::new(2).unwrap();
        assert!((r.nodes[1] - 1.0).abs() < 1e-15);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
        let r = GaussHermite::new(3).unwrap();
        assert!((r.nodes[2] - 3f64.sqrt()).abs() < 1e-14);
        assert!((r.weights[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn even_moments_exact_to_high_degree() {
        let r = rule(64).unwrap();
        for k in 1..=30u32 {
            let got = r.integrate(|x| x.powi(2 * k as i32));
            let exact = double_factorial_odd(k);
            assert!(((got - exact) / exact).abs() < 1e-12, "k = {k}: {got} vs {exact}");
        }
    }

    #[test]
    fn tail_weights_are_relatively_accurate() {
        // The 1024-point rule reaches |x| ≈ 64, where x^60 is astronomically
        // large; the underflowed and tiny tail weights must not pollute 59!!.
        let r = rule(1024).unwrap();
        let got = r.integrate(|x| x.powi(60));
        let exact = double_factorial_odd(30);
        assert!(((got - exact) / exact).abs() < 1e-11);
    }

    #[test]
    fn cosine_expectation() {
        let got = gaussian_expectation(|x| (1.5 * x).cos(), DEFAULT_TOL).unwrap();
        assert!((got - (-1.125f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn divergent_integrand_reports_failure() {
        let err = gaussian_expectation(|x| (x * x).exp(), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
