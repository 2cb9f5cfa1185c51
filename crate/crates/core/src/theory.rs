//! Closed-form and numerical predictions for the spectrum of `M`.
//!
//! The Marchenko-Pastur law `MP(γ, θ₁)` is the limiting bulk when `θ₂ = 0`;
//! its edges are `θ₁(1 ∓ √γ)²`. The largest eigenvalue of the spiked models
//! is predicted either by the explicit formula (`θ₂ = 0`) or by inverting the
//! D-transform of a simulated bulk.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::activations::ThetaParams;
use crate::combinatorics::narayana;
use crate::ensemble::THETA2_ZERO_TOL;
use crate::error::{Error, Result};
use crate::spectra::SpectrumResult;

/// Default `c` in the outlier buffer `edge · (1 + c n₁^{-2/3})`.
pub const OUTLIER_BUFFER: f64 = 5.0;
/// Relative offset above `√λ_max` at which the D-transform edge value is read.
pub const D_EDGE_OFFSET: f64 = 1e-3;

fn check_mp(gamma: f64, theta1: f64) -> Result<()> {
    if !(gamma > 0.0 && theta1 > 0.0 && gamma.is_finite() && theta1.is_finite()) {
        return Err(Error::Parameter(format!("need gamma > 0 and theta1 > 0, got {gamma}, {theta1}")));
    }
    Ok(())
}

/// Support edges `(θ₁(1−√γ)², θ₁(1+√γ)²)`.
pub fn mp_edges(gamma: f64, theta1: f64) -> Result<(f64, f64)> {
    check_mp(gamma, theta1)?;
    let r = gamma.sqrt();
    Ok((theta1 * (1.0 - r).powi(2), theta1 * (1.0 + r).powi(2)))
}

/// Density of the absolutely continuous part. For `γ > 1` there is in
/// addition an atom of mass `1 − 1/γ` at zero.
pub fn mp_density(x: f64, gamma: f64, theta1: f64) -> Result<f64> {
    let (a, b) = mp_edges(gamma, theta1)?;
    if x <= a || x >= b || x <= 0.0 {
        return Ok(0.0);
    }
    Ok(((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * gamma * theta1 * x))
}

/// Mass of the zero atom.
pub fn mp_atom(gamma: f64) -> f64 {
    (1.0 - 1.0 / gamma).max(0.0)
}

/// Distribution function, atom included.
///
/// With `x = (a+b)/2 − (b−a)/2·cos t` the integrand becomes smooth in `t`
/// (the square-root singularities at both edges disappear), so composite
/// Simpson converges quickly.
pub fn mp_cdf(x: f64, gamma: f64, theta1: f64) -> Result<f64> {
    let (a, b) = mp_edges(gamma, theta1)?;
    if x < 0.0 {
        return Ok(0.0);
    }
    let atom = mp_atom(gamma);
    if x <= a {
        return Ok(atom);
    }
    if x >= b {
        return Ok(1.0);
    }
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let t_end = ((mid - x) / half).clamp(-1.0, 1.0).acos();
    let scale = half * half / (2.0 * std::f64::consts::PI * gamma * theta1);
    let g = |t: f64| {
        let xt = mid - half * t.cos();
        let s = t.sin();
        if xt <= 0.0 {
            // γ = 1 at t = 0: sin²t / x(t) → 4/b.
            4.0 / b * scale
        } else {
            scale * s * s / xt
        }
    };
    const N: usize = 2048;
    let h = t_end / N as f64;
    let mut s = g(0.0) + g(t_end);
    for k in 1..N {
        s += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok((atom + s * h / 3.0).min(1.0))
}

/// `∫ dμ(x) / (x − z)` in closed form, `Im z > 0`.
pub fn mp_stieltjes(z: Complex64, gamma: f64, theta1: f64) -> Result<Complex64> {
    let (a, b) = mp_edges(gamma, theta1)?;
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("Stieltjes transform needs Im z > 0, got {z}")));
    }
    let root = (z - a).sqrt() * (z - b).sqrt();
    Ok((-z + theta1 * (1.0 - gamma) + root) / (2.0 * gamma * theta1 * z))
}

/// `∫ x^q dμ = θ₁^q Σ_l N(q, l) γ^{q−l}`.
pub fn mp_moment(q: usize, gamma: f64, theta1: f64) -> Result<f64> {
    check_mp(gamma, theta1)?;
    if q == 0 {
        return Ok(1.0);
    }
    let s: f64 = (1..=q).map(|l| narayana(q, l) as f64 * gamma.powi((q - l) as i32)).sum();
    Ok(theta1.powi(q as i32) * s)
}

/// Which closed form is reported as the headline prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `θ₁(1+α)(γ+α)/α` above threshold, `(1+√γ)²` below.
    Paper,
    /// `(θ₁+α)(θ₁γ+α)/α` above threshold, `θ₁(1+√γ)²` below.
    #[default]
    Covariant,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Paper => "paper",
            Convention::Covariant => "covariant",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paper" => Ok(Convention::Paper),
            "covariant" => Ok(Convention::Covariant),
            other => Err(Error::parse("convention", format!("expected `paper` or `covariant`, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionInputs {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub kappa: f64,
    pub phi: f64,
    pub psi: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionReport {
    pub bulk_edge_low: f64,
    pub bulk_edge_high: f64,
    /// `θ₃κ/ψ`.
    pub alpha: f64,
    /// `α > √γ θ₁`.
    pub supercritical: bool,
    pub predicted_lambda1_paper: f64,
    pub predicted_lambda1_covariant: f64,
    pub convention: Convention,
    /// The prediction selected by `convention`.
    pub predicted_lambda1: f64,
    pub inputs: PredictionInputs,
}

/// Explicit largest-eigenvalue prediction for the all-ones spiked model.
/// Only valid at `θ₂ = 0`; otherwise use [`outlier_from_d_transform`].
pub fn bbp_prediction(
    thetas: &ThetaParams,
    kappa: f64,
    phi: f64,
    psi: f64,
    convention: Convention,
) -> Result<PredictionReport> {
    let ThetaParams { theta1, theta2, theta3, .. } = *thetas;
    if theta2.abs() >= THETA2_ZERO_TOL {
        return Err(Error::Hypothesis(format!(
            "explicit outlier formula needs theta2 = 0 (got {theta2}); use the D-transform prediction instead"
        )));
    }
    if !(kappa >= 0.0) {
        return Err(Error::Parameter(format!("kappa must be >= 0, got {kappa}")));
    }
    if !(phi > 0.0 && psi > 0.0) {
        return Err(Error::Parameter(format!("ratios must be positive, got phi={phi} psi={psi}")));
    }
    let gamma = phi / psi;
    let (low, high) = mp_edges(gamma, theta1)?;
    let alpha = theta3 * kappa / psi;
    let supercritical = alpha > gamma.sqrt() * theta1;
    let (paper, covariant) = if supercritical {
        (theta1 * (1.0 + alpha) * (gamma + alpha) / alpha, (theta1 + alpha) * (theta1 * gamma + alpha) / alpha)
    } else {
        ((1.0 + gamma.sqrt()).powi(2), high)
    };
    Ok(PredictionReport {
        bulk_edge_low: low,
        bulk_edge_high: high,
        alpha,
        supercritical,
        predicted_lambda1_paper: paper,
        predicted_lambda1_covariant: covariant,
        convention,
        predicted_lambda1: match convention {
            Convention::Paper => paper,
            Convention::Covariant => covariant,
        },
        inputs: PredictionInputs { theta1, theta2, theta3, kappa, phi, psi, gamma },
    })
}

fn d_transform_unchecked(eigenvalues: &[f64], z: f64, gamma: f64) -> f64 {
    let z2 = z * z;
    let g = eigenvalues.iter().map(|&x| z / (z2 - x)).sum::<f64>() / eigenvalues.len() as f64;
    g * (gamma * g + (1.0 - gamma) / z)
}

/// `D(z) = G(z)(γ G(z) + (1−γ)/z)` with `G(z) = ∫ z/(z²−x) dμ̂(x)`.
pub fn d_transform(eigenvalues: &[f64], z: f64, gamma: f64) -> Result<f64> {
    if eigenvalues.is_empty() {
        return Err(Error::Parameter("empty eigenvalue sample".into()));
    }
    let max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(z > 0.0 && z * z > max) {
        return Err(Error::Domain(format!("D-transform needs z^2 > max eigenvalue {max}, got z = {z}")));
    }
    Ok(d_transform_unchecked(eigenvalues, z, gamma))
}

/// Result of inverting the D-transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OutlierPrediction {
    /// No outlier: the largest eigenvalue sticks to the bulk edge.
    Bulk { edge: f64 },
    /// Predicted outlier; `z` solves `D(z) = 1/α` and `lambda` is `z²` or `z`.
    At { z: f64, lambda: f64 },
}

impl OutlierPrediction {
    /// The predicted largest eigenvalue in either case.
    pub fn lambda1(&self) -> f64 {
        match *self {
            OutlierPrediction::Bulk { edge } => edge,
            OutlierPrediction::At { lambda, .. } => lambda,
        }
    }
}

/// Locate the outlier created by a spike of strength `α` on the bulk `μ̂`.
///
/// `square = true` reports `z*²`, the eigenvalue scale; `false` reports `z*`.
pub fn outlier_from_d_transform(eigenvalues: &[f64], alpha: f64, gamma: f64, square: bool) -> Result<OutlierPrediction> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be > 0, got {alpha}")));
    }
    if eigenvalues.is_empty() {
        return Err(Error::Parameter("empty eigenvalue sample".into()));
    }
    let max = eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let z_edge = max.sqrt().max(f64::MIN_POSITIVE) * (1.0 + D_EDGE_OFFSET);
    let target = 1.0 / alpha;
    let d_edge = d_transform_unchecked(eigenvalues, z_edge, gamma);
    if target >= d_edge {
        return Ok(OutlierPrediction::Bulk { edge: max });
    }
    let f = |z: f64| d_transform_unchecked(eigenvalues, z, gamma) - target;
    let (mut lo, mut hi) = (z_edge, 2.0 * z_edge);
    let mut doublings = 0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2100 || !hi.is_finite() {
            return Err(Error::Bracket { low: lo, high: hi, f_low: f(lo), f_high: f(hi) });
        }
    }
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo > 0.0 && f_hi <= 0.0) {
        return Err(Error::Bracket { low: lo, high: hi, f_low: f_lo, f_high: f_hi });
    }
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    Ok(OutlierPrediction::At { z, lambda: if square { z * z } else { z } })
}

/// The classification threshold `edge · (1 + c n₁^{-2/3})`.
pub fn outlier_threshold(bulk_edge_high: f64, n1: usize, c: f64) -> f64 {
    bulk_edge_high * (1.0 + c * (n1 as f64).powf(-2.0 / 3.0))
}

/// Eigenvalues above [`outlier_threshold`], descending.
pub fn classify_outliers(spectrum: &SpectrumResult, bulk_edge_high: f64, c: f64) -> Vec<f64> {
    let t = outlier_threshold(bulk_edge_high, spectrum.rows, c);
    spectrum.eigenvalues.iter().copied().take_while(|&v| v > t).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WignerCheck {
    /// `ρ(x) = x + √θ₁/x`.
    pub rho: f64,
    pub rho_squared: f64,
    /// `(θ₁+α)²/α` with `α = x²`: the covariant formula at `γ = 1`.
    pub matrix_formula: f64,
    /// Whether `ρ(x)²` agrees with the matrix formula; only expected at `θ₁ = 1`.
    pub consistent: bool,
}

/// Square-case cross-check of the outlier location through `ρ(x) = x + √θ₁/x`.
pub fn wigner_cross_check(theta1: f64, x: f64) -> Result<WignerCheck> {
    if !(x > 0.0 && theta1 > 0.0) {
        return Err(Error::Parameter(format!("need x > 0 and theta1 > 0, got {x}, {theta1}")));
    }
    let rho = x + theta1.sqrt() / x;
    let alpha = x * x;
    let matrix_formula = (theta1 + alpha).powi(2) / alpha;
    let rho_squared = rho * rho;
    let consistent = (rho_squared - matrix_formula).abs() <= 1e-12 * matrix_formula;
    if (theta1 - 1.0).abs() < 1e-15 && !consistent {
        return Err(Error::Invariant(format!("rho(x)^2 = {rho_squared} differs from {matrix_formula} at theta1 = 1")));
    }
    Ok(WignerCheck { rho, rho_squared, matrix_formula, consistent })
}
