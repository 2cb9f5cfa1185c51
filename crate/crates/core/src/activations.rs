//! Activation functions and their Gaussian-moment parameters.
//!
//! An [`Activation`] is an entrywise function together with a centering shift
//! chosen so that `E[f(σ𝒩(0,1))] = 0` at the variance `σ = σ_w σ_x` of the
//! pre-activations. The three functionals
//!
//! ```text
//! θ₁ = E[f(σN)²],   θ₂ = (E[σ f′(σN)])²,   θ₃ = (E[(σ²/2) f″(σN)])²
//! ```
//!
//! govern the limiting bulk (θ₁, θ₂) and the outliers (θ₃).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parse;
use crate::quadrature::{self, gaussian_expectation};

/// Centering tolerance on the quadrature mean.
pub const CENTERING_TOL: f64 = 1e-8;

/// Largest `k` accepted by [`Activation::even_centered_monomial`]; beyond it
/// `(2k − 1)!!` exceeds 2⁵³.
pub const MAX_EVEN_MONOMIAL_K: u32 = 15;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Identity,
    /// `(cos(αx) − e^{−α²/2}) / normalizer`.
    Cos { alpha: f64, normalizer: f64 },
    /// Power-basis coefficients `c₀ + c₁x + …`.
    Polynomial(Vec<f64>),
    Tanh,
    Relu,
    Custom { f: ScalarFn, smooth: bool },
}

/// An entrywise activation with its centering shift.
#[derive(Clone)]
pub struct Activation {
    kind: Kind,
    shift: f64,
    centered_at: Option<f64>,
    label: String,
}

/// The three Gaussian-moment parameters of a centered activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// `σ_w σ_x` at which the expectations were taken.
    pub sigma_product: f64,
}

impl ThetaParams {
    /// `θ₂ ≤ θ₁` and `θ₃ ≤ θ₁/2` up to `tol`.
    pub fn satisfies_stein_bounds(&self, tol: f64) -> bool {
        self.theta2 <= self.theta1 + tol && self.theta3 <= self.theta1 / 2.0 + tol
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn derivative_coeffs(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(j, &a)| j as f64 * a).collect()
}

/// `E[N^j]` for `N ~ 𝒩(0,1)`: `(j − 1)!!` for even `j`, zero for odd `j`.
pub fn gaussian_moment(j: u32) -> f64 {
    if j % 2 == 1 {
        0.0
    } else {
        (1..=j / 2).map(|i| (2 * i - 1) as f64).product()
    }
}

/// The standard double factorial `j!! = j(j − 2)(j − 4)…`, with `0!! = 1`.
pub fn double_factorial(j: u32) -> f64 {
    let mut acc = 1.0;
    let mut k = j;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

fn factorial(j: u32) -> f64 {
    (1..=j).map(|i| i as f64).product()
}

fn fmt_coeffs(prefix: &str, c: &[f64], from: usize) -> String {
    let parts: Vec<String> = c
        .iter()
        .enumerate()
        .skip(from)
        .filter(|(_, &a)| a != 0.0)
        .map(|(j, a)| format!("{prefix}{j}={a}"))
        .collect();
    parts.join(",")
}

impl Kind {
    fn raw(&self, x: f64) -> f64 {
        match self {
            Kind::Identity => x,
            Kind::Cos { alpha, normalizer } => {
                ((alpha * x).cos() - (-alpha * alpha / 2.0).exp()) / normalizer
            }
            Kind::Polynomial(c) => horner(c, x),
            Kind::Tanh => x.tanh(),
            Kind::Relu => x.max(0.0),
            Kind::Custom { f, .. } => f(x),
        }
    }
}

impl Activation {
    fn from_kind(kind: Kind, label: String) -> Self {
        Self { kind, shift: 0.0, centered_at: None, label }
    }

    /// `f(x) = x`.
    pub fn identity() -> Self {
        Self::from_kind(Kind::Identity, "identity".into())
    }

    /// `f_α(x) = (cos(αx) − e^{−α²/2}) / √(e^{−α²}(cosh(α²) − 1))`, centered
    /// and of unit `θ₁` at `σ = 1`.
    pub fn cos_family(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Parameter(format!("cos family needs alpha > 0, got {alpha}")));
        }
        // e^{−α²}(cosh α² − 1) = (1 − e^{−α²})² / 2, evaluated without cancellation.
        let normalizer = -(-alpha * alpha).exp_m1() / std::f64::consts::SQRT_2;
        if !(normalizer > 1e-8) {
            return Err(Error::Parameter(format!(
                "cos family normalizer {normalizer:e} underflows for alpha = {alpha}"
            )));
        }
        let mut a = Self::from_kind(Kind::Cos { alpha, normalizer }, format!("cos(alpha={alpha})"));
        a.centered_at = Some(1.0);
        Ok(a)
    }

    /// A polynomial in the power basis, `c[0] + c[1]x + …`. Not centered.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("polynomial coefficients must be finite".into()));
        }
        let label = format!("poly({})", fmt_coeffs("c", &coeffs, 0));
        Ok(Self::from_kind(Kind::Polynomial(coeffs), label))
    }

    /// `Σ h[j] He_j(x)` in the probabilists' Hermite basis. Centered at
    /// `σ = 1` whenever `h[0] = 0`.
    pub fn hermite(h: &[f64]) -> Result<Self> {
        let deg = h.len().saturating_sub(1);
        let mut power = vec![0.0; deg + 1];
        // He_{n+1} = x He_n − n He_{n−1}
        let mut prev = vec![0.0; deg + 2];
        let mut cur = vec![0.0; deg + 2];
        cur[0] = 1.0;
        for (n, &hn) in h.iter().enumerate() {
            for j in 0..=deg {
                power[j] += hn * cur[j];
            }
            let mut next = vec![0.0; deg + 2];
            for j in 0..=deg {
                next[j + 1] += cur[j];
                next[j] -= n as f64 * prev[j];
            }
            prev = cur;
            cur = next;
        }
        let mut a = Self::polynomial(power)?;
        a.label = format!("hermite({})", fmt_coeffs("h", h, 0));
        if h.first().copied().unwrap_or(0.0) == 0.0 {
            a.centered_at = Some(1.0);
        }
        Ok(a)
    }

    /// `x^{2k} − (2k − 1)!!`, optionally divided by `√θ₁` so that `θ₁ = 1`.
    ///
    /// The subtracted constant is the Gaussian moment `E[N^{2k}]`, which is
    /// what makes the function centered; the standard double factorial
    /// `(2k)!!` is available from [`double_factorial`] for comparison.
    pub fn even_centered_monomial(k: u32, normalize: bool) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("even monomial needs k >= 1".into()));
        }
        if k > MAX_EVEN_MONOMIAL_K {
            return Err(Error::Parameter(format!(
                "even monomial degree 2k = {} overflows exact double-factorial constants (k <= {MAX_EVEN_MONOMIAL_K})",
                2 * k
            )));
        }
        let centering = gaussian_moment(2 * k);
        let scale = if normalize {
            // θ₁ = E N^{4k} − (E N^{2k})²
            (gaussian_moment(4 * k) - centering * centering).sqrt()
        } else {
            1.0
        };
        let mut c = vec![0.0; 2 * k as usize + 1];
        c[0] = -centering / scale;
        c[2 * k as usize] = 1.0 / scale;
        let mut a = Self::from_kind(
            Kind::Polynomial(c),
            format!("evenmono(k={k},normalize={normalize})"),
        );
        a.centered_at = Some(1.0);
        Ok(a)
    }

    /// `tanh(x)`.
    pub fn tanh() -> Self {
        Self::from_kind(Kind::Tanh, "tanh".into())
    }

    /// `max(x, 0)`. Usable in simulations but not smooth.
    pub fn relu() -> Self {
        Self::from_kind(Kind::Relu, "relu".into())
    }

    /// A user function; derivatives come from central differences.
    pub fn custom(label: impl Into<String>, smooth: bool, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_kind(Kind::Custom { f: Arc::new(f), smooth }, label.into())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The constant subtracted from the raw function.
    pub fn centering_shift(&self) -> f64 {
        self.shift
    }

    /// False for activations outside the smoothness class the outlier theory
    /// assumes (ReLU, or custom functions declared non-smooth).
    pub fn within_theorem_hypotheses(&self) -> bool {
        match &self.kind {
            Kind::Relu => false,
            Kind::Custom { smooth, .. } => *smooth,
            _ => true,
        }
    }

    /// True for odd built-ins; those are centered at every `σ`.
    fn is_odd(&self) -> bool {
        match &self.kind {
            Kind::Identity | Kind::Tanh => true,
            Kind::Polynomial(c) => c.iter().step_by(2).all(|&a| a == 0.0),
            _ => false,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.kind.raw(x) - self.shift
    }

    pub fn derivative1(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Identity => 1.0,
            Kind::Cos { alpha, normalizer } => -alpha * (alpha * x).sin() / normalizer,
            Kind::Polynomial(c) => horner(&derivative_coeffs(c), x),
            Kind::Tanh => 1.0 - x.tanh().powi(2),
            Kind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Custom { f, .. } => {
                let h = f64::EPSILON.cbrt() * x.abs().max(1.0);
                (f(x + h) - f(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn derivative2(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Identity | Kind::Relu => 0.0,
            Kind::Cos { alpha, normalizer } => -alpha * alpha * (alpha * x).cos() / normalizer,
            Kind::Polynomial(c) => horner(&derivative_coeffs(&derivative_coeffs(c)), x),
            Kind::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Kind::Custom { f, .. } => {
                let h = f64::EPSILON.powf(0.25) * x.abs().max(1.0);
                (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
            }
        }
    }

    /// Quadrature estimate of `E[f(σN)]` with the current shift applied.
    pub fn gaussian_mean(&self, sigma: f64) -> Result<f64> {
        gaussian_expectation(|z| self.eval(sigma * z), quadrature::DEFAULT_TOL)
    }

    /// Whether the activation is known to be centered at `sigma`.
    pub fn is_centered_for(&self, sigma: f64) -> bool {
        if self.is_odd() {
            return true;
        }
        match self.centered_at {
            Some(s) if s == sigma => true,
            _ => self.gaussian_mean(sigma).map(|m| m.abs() < CENTERING_TOL).unwrap_or(false),
        }
    }

    /// A copy shifted so that `E[f(σN)] = 0` by quadrature.
    pub fn centered(&self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        let mut out = self.clone();
        if self.is_odd() {
            out.centered_at = Some(sigma);
            return Ok(out);
        }
        if self.centered_at == Some(sigma) {
            return Ok(out);
        }
        let mean = self.gaussian_mean(sigma)?;
        out.shift += mean;
        let residual = out.gaussian_mean(sigma)?;
        if residual.abs() >= CENTERING_TOL {
            out.shift += residual;
        }
        out.centered_at = Some(sigma);
        Ok(out)
    }
}

/// `(θ₁, θ₂, θ₃)` by Gauss-Hermite quadrature at `σ = sigma_product`.
///
/// The activation is centered first if needed.
pub fn theta_params(f: &Activation, sigma_product: f64, tol: f64) -> Result<ThetaParams> {
    let f = f.centered(sigma_product)?;
    let s = sigma_product;
    let theta1 = gaussian_expectation(|z| f.eval(s * z).powi(2), tol)?;
    let d1 = gaussian_expectation(|z| s * f.derivative1(s * z), tol)?;
    let d2 = gaussian_expectation(|z| 0.5 * s * s * f.derivative2(s * z), tol)?;
    Ok(ThetaParams { theta1, theta2: d1 * d1, theta3: d2 * d2, sigma_product })
}

/// Centered Taylor polynomial from the derivatives `f^{(j)}(0)`, `j = 0..=k`.
///
/// Returns `P_k(x) = Σ_{j=1}^{k} f^{(j)}(0)(x^j − m_j)/j!` and the constant
/// `a_k = Σ_{j=0}^{k} f^{(j)}(0) m_j / j!`, where `m_j = E[N^j]` (zero for odd
/// `j`, `m₀ = 1`).
pub fn taylor_centered(derivatives_at_zero: &[f64]) -> Result<(Activation, f64)> {
    if derivatives_at_zero.len() < 2 {
        return Err(Error::Parameter("Taylor polynomial needs k >= 1".into()));
    }
    let mut coeffs = Vec::with_capacity(derivatives_at_zero.len());
    let mut a_k = 0.0;
    let mut constant = 0.0;
    for (j, &d) in derivatives_at_zero.iter().enumerate() {
        let jf = factorial(j as u32);
        let m = gaussian_moment(j as u32);
        a_k += d * m / jf;
        if j == 0 {
            coeffs.push(0.0);
        } else {
            coeffs.push(d / jf);
            constant -= d * m / jf;
        }
    }
    coeffs[0] = constant;
    let mut f = Activation::polynomial(coeffs)?;
    f.label = format!("taylor({})", fmt_coeffs("d", derivatives_at_zero, 0));
    f.centered_at = Some(1.0);
    Ok((f, a_k))
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Activation")
            .field("label", &self.label)
            .field("shift", &self.shift)
            .field("centered_at", &self.centered_at)
            .finish()
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

fn indexed_coeffs(s: &str, inner: &str, prefix: char) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    for (k, v) in parse::key_values(inner)? {
        let idx: usize = k
            .strip_prefix(prefix)
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::parse(s, format!("expected {prefix}<index>=value, got '{k}'")))?;
        if idx > 64 {
            return Err(Error::parse(s, format!("coefficient index {idx} too large")));
        }
        if out.len() <= idx {
            out.resize(idx + 1, 0.0);
        }
        out[idx] = parse::number(s, v)?;
    }
    if out.is_empty() {
        return Err(Error::parse(s, "no coefficients given"));
    }
    Ok(out)
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `identity`, `tanh`, `relu`, `cos(alpha=1.5)`,
    /// `evenmono(k=2,normalize=true)`, `poly(c1=…,c2=…)`, `hermite(h1=…,h2=…)`
    /// and `taylor(d0=…,d1=…,…)`.
    fn from_str(s: &str) -> Result<Self> {
        let c = parse::call(s)?;
        let kv = || parse::key_values(c.inner);
        match c.name {
            "identity" => Ok(Activation::identity()),
            "tanh" => Ok(Activation::tanh()),
            "relu" => Ok(Activation::relu()),
            "cos" => {
                let mut alpha = None;
                for (k, v) in kv()? {
                    match k {
                        "alpha" => alpha = Some(parse::number(s, v)?),
                        other => return Err(Error::parse(s, format!("unknown key '{other}'"))),
                    }
                }
                Activation::cos_family(alpha.ok_or_else(|| Error::parse(s, "missing alpha"))?)
            }
            "evenmono" => {
                let mut k_val = None;
                let mut normalize = false;
                for (k, v) in kv()? {
                    match k {
                        "k" => {
                            k_val = Some(v.parse::<u32>().map_err(|_| Error::parse(s, "k must be a positive integer"))?)
                        }
                        "normalize" => {
                            normalize = v.parse::<bool>().map_err(|_| Error::parse(s, "normalize must be true or false"))?
                        }
                        other => return Err(Error::parse(s, format!("unknown key '{other}'"))),
                    }
                }
                Activation::even_centered_monomial(k_val.ok_or_else(|| Error::parse(s, "missing k"))?, normalize)
            }
            "poly" => Activation::polynomial(indexed_coeffs(s, c.inner, 'c')?),
            "hermite" => Activation::hermite(&indexed_coeffs(s, c.inner, 'h')?),
            "taylor" => Ok(taylor_centered(&indexed_coeffs(s, c.inner, 'd')?)?.0),
            other => Err(Error::parse(s, format!("unknown activation '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-10;

    #[test]
    fn identity_thetas() {
        let t = theta_params(&Activation::identity(), 1.0, TOL).unwrap();
        assert!((t.theta1 - 1.0).abs() < 1e-12);
        assert!((t.theta2 - 1.0).abs() < 1e-12);
        assert!(t.theta3.abs() < 1e-12);
    }

    #[test]
    fn centered_square_thetas() {
        let f = Activation::even_centered_monomial(1, true).unwrap();
        let t = theta_params(&f, 1.0, TOL).unwrap();
        assert!((t.theta1 - 1.0).abs() < 1e-12);
        assert!(t.theta2.abs() < 1e-12);
        assert!((t.theta3 - 0.5).abs() < 1e-12);
        // Same function through the generic polynomial path.
        let g = Activation::polynomial(vec![-1.0 / 2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt()]).unwrap();
        let tg = theta_params(&g, 1.0, TOL).unwrap();
        assert!((tg.theta3 - t.theta3).abs() < 1e-12);
    }

    #[test]
    fn even_monomial_centering_constant() {
        // k = 1: the centered form is x² − 1 (not x² − 2!! = x² − 2).
        let f = Activation::even_centered_monomial(1, false).unwrap();
        assert_eq!(f.eval(0.0), -1.0);
        assert_eq!(double_factorial(2), 2.0);
        let raw = Activation::polynomial(vec![0.0, 0.0, 1.0]).unwrap();
        let oracle_mean = raw.gaussian_mean(1.0).unwrap();
        assert!((oracle_mean - 1.0).abs() < 1e-14);
        for k in 1..=MAX_EVEN_MONOMIAL_K {
            let f = Activation::even_centered_monomial(k, true).unwrap();
            assert!(f.gaussian_mean(1.0).unwrap().abs() < CENTERING_TOL, "k = {k}");
        }
        assert!(Activation::even_centered_monomial(16, false).is_err());
        assert!(Activation::even_centered_monomial(0, false).is_err());
    }

    #[test]
    fn cos_family_values() {
        let f = Activation::cos_family(1.0).unwrap();
        let e1 = (-1.0f64).exp();
        let expected = (1.0 - (-0.5f64).exp()) / (e1 * (1f64.cosh() - 1.0)).sqrt();
        assert!((f.eval(0.0) - expected).abs() < 1e-14);
        let t = theta_params(&f, 1.0, TOL).unwrap();
        assert!((t.theta1 - 1.0).abs() < 1e-10);
        assert!(t.theta2.abs() < 1e-12);
        let theta3 = ((-0.5f64).exp() / (2.0 * (e1 * (1f64.cosh() - 1.0)).sqrt())).powi(2);
        assert!((t.theta3 - theta3).abs() < 1e-10);
        for alpha in [0.3, 0.8, 1.5, 2.0, 5.0] {
            let f = Activation::cos_family(alpha).unwrap();
            assert!(f.gaussian_mean(1.0).unwrap().abs() < 1e-8);
        }
        let t2 = theta_params(&Activation::cos_family(2.0).unwrap(), 1.0, TOL).unwrap();
        let t08 = theta_params(&Activation::cos_family(0.8).unwrap(), 1.0, TOL).unwrap();
        assert!(t08.theta3 > t2.theta3);
        assert!(Activation::cos_family(1e-5).is_err());
        assert!(Activation::cos_family(-1.0).is_err());
    }

    #[test]
    fn cubic_hermite_thetas() {
        let f = Activation::polynomial(vec![0.0, -3.0, 0.0, 1.0]).unwrap();
        let t = theta_params(&f, 1.0, TOL).unwrap();
        assert!((t.theta1 - 6.0).abs() < 1e-10);
        assert!(t.theta2.abs() < 1e-10);
        assert!(t.theta3.abs() < 1e-12);
    }

    #[test]
    fn taylor_constants() {
        // sin: derivatives 0, 1, 0, -1, 0, 1 at zero.
        let (p, a) = taylor_centered(&[0.0, 1.0, 0.0, -1.0, 0.0, 1.0]).unwrap();
        assert_eq!(a, 0.0);
        assert!(p.gaussian_mean(1.0).unwrap().abs() < 1e-8);
        // exp up to k = 4.
        let (p, a) = taylor_centered(&[1.0; 5]).unwrap();
        assert!((a - (1.0 + 0.5 + 3.0 / 24.0)).abs() < 1e-15);
        assert!(p.gaussian_mean(1.0).unwrap().abs() < 1e-8);
        assert!(taylor_centered(&[1.0]).is_err());
    }

    #[test]
    fn sigma_rescaling_recenters() {
        let f = Activation::cos_family(1.0).unwrap();
        assert!(!f.is_centered_for(2.0));
        let g = f.centered(2.0).unwrap();
        assert!(g.gaussian_mean(2.0).unwrap().abs() < CENTERING_TOL);
        assert!(g.is_centered_for(2.0));
    }

    #[test]
    fn odd_activations_have_no_theta3() {
        for f in [Activation::tanh(), Activation::polynomial(vec![0.0, 1.0, 0.0, 0.3]).unwrap()] {
            let t = theta_params(&f, 1.3, TOL).unwrap();
            assert!(t.theta3 < 1e-12, "{f}: theta3 = {}", t.theta3);
        }
    }

    #[test]
    fn hermite_basis_conversion() {
        // He_3 = x³ − 3x
        let f = Activation::hermite(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        for x in [-1.3, 0.0, 0.7, 2.0] {
            assert!((f.eval(x) - (x * x * x - 3.0 * x)).abs() < 1e-14);
        }
    }

    #[test]
    fn finite_difference_fallback() {
        let f = Activation::custom("sin", true, f64::sin);
        for x in [-2.0, 0.1, 1.0, 5.0] {
            assert!((f.derivative1(x) - x.cos()).abs() < 1e-9);
            assert!((f.derivative2(x) + x.sin()).abs() < 1e-6);
        }
        assert!(!Activation::relu().within_theorem_hypotheses());
        assert!(Activation::tanh().within_theorem_hypotheses());
    }

    #[test]
    fn spec_strings() {
        for s in [
            "identity",
            "tanh",
            "relu",
            "cos(alpha=1.5)",
            "evenmono(k=2,normalize=true)",
            "poly(c1=0.5,c2=0.25)",
            "hermite(h1=0.3,h2=0.2)",
            "taylor(d0=1,d1=1,d2=1)",
        ] {
            let f: Activation = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("cos".parse::<Activation>().is_err());
        assert!("sigmoid".parse::<Activation>().is_err());
        assert!("poly(x1=1)".parse::<Activation>().is_err());
    }
}
