//! The conjugate-kernel factor `Y = f(WX/√n₀)` and its linear surrogates.
//!
//! Every model is represented by its `n₁ × m` factor `F`; the matrix of
//! interest is always `M = (1/m)·F·Fᵀ`.

use std::io::{Read, Write};

use faer::{Accum, Mat, Par};
use serde::{Deserialize, Serialize};

use crate::activations::{Activation, ThetaParams};
use crate::distributions::EntryDistribution;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Role};

/// Largest `|θ₂|` accepted as zero by the rank-one information-plus-noise model.
pub const THETA2_ZERO_TOL: f64 = 1e-8;

/// Matrix dimensions: `W` is `n₁ × n₀`, `X` is `n₀ × m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub n0: usize,
    pub n1: usize,
    pub m: usize,
}

impl Shape {
    pub fn new(n0: usize, n1: usize, m: usize) -> Result<Self> {
        if n0 < 2 || n1 < 2 || m < 2 {
            return Err(Error::Parameter(format!("all dimensions must be >= 2, got n0={n0} n1={n1} m={m}")));
        }
        Ok(Self { n0, n1, m })
    }

    /// `n₀ = round(ψ n₁)`, `m = round(n₀ / φ)`.
    pub fn from_ratios(n1: usize, phi: f64, psi: f64) -> Result<Self> {
        if !(phi > 0.0 && psi > 0.0 && phi.is_finite() && psi.is_finite()) {
            return Err(Error::Parameter(format!("ratios must be positive, got phi={phi} psi={psi}")));
        }
        let n0 = (psi * n1 as f64).round() as usize;
        let m = (n0 as f64 / phi).round() as usize;
        Self::new(n0, n1, m)
    }

    /// `n₀ / m`.
    pub fn phi(&self) -> f64 {
        self.n0 as f64 / self.m as f64
    }

    /// `n₀ / n₁`.
    pub fn psi(&self) -> f64 {
        self.n0 as f64 / self.n1 as f64
    }

    /// `φ / ψ = n₁ / m`.
    pub fn gamma(&self) -> f64 {
        self.phi() / self.psi()
    }
}

/// Which ensemble produced a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    Nonlinear,
    LinearPlain,
    #[serde(rename = "linear-J2")]
    LinearJ2,
    #[serde(rename = "info-plus-noise-J")]
    InfoPlusNoiseJ,
    InfoPlusNoiseGaussianSpike,
    /// A factor supplied from outside the crate.
    External,
}

impl ModelTag {
    fn code(self) -> u32 {
        match self {
            ModelTag::Nonlinear => 0,
            ModelTag::LinearPlain => 1,
            ModelTag::LinearJ2 => 2,
            ModelTag::InfoPlusNoiseJ => 3,
            ModelTag::InfoPlusNoiseGaussianSpike => 4,
            ModelTag::External => 5,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => ModelTag::Nonlinear,
            1 => ModelTag::LinearPlain,
            2 => ModelTag::LinearJ2,
            3 => ModelTag::InfoPlusNoiseJ,
            4 => ModelTag::InfoPlusNoiseGaussianSpike,
            5 => ModelTag::External,
            _ => return None,
        })
    }
}

/// Low-rank part added to a surrogate factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateVariant {
    /// No spike: `√(θ₁−θ₂) Z̃ + √(θ₂/n₀) W̃X̃`.
    Plain,
    /// Block-diagonal rank-two spike with `√κ_w` and `√κ_x` blocks.
    #[serde(rename = "J2")]
    J2,
    /// All-ones spike `√(θ₃κ/n₀) J`, `κ = max(κ_w, κ_x)`; needs `θ₂ = 0`.
    AllOnes,
    /// Gaussian rank-one spike `√(θ₃κ/n₀) u vᵀ`.
    GaussianSpike,
}

impl SurrogateVariant {
    pub fn tag(self) -> ModelTag {
        match self {
            SurrogateVariant::Plain => ModelTag::LinearPlain,
            SurrogateVariant::J2 => ModelTag::LinearJ2,
            SurrogateVariant::AllOnes => ModelTag::InfoPlusNoiseJ,
            SurrogateVariant::GaussianSpike => ModelTag::InfoPlusNoiseGaussianSpike,
        }
    }
}

/// An `n₁ × m` factor `F` of `M = (1/m) F Fᵀ`.
#[derive(Debug, Clone)]
pub struct FactorMatrix {
    pub entries: Mat<f64>,
    pub tag: ModelTag,
    pub seed: u64,
    /// Dimensions of the model that produced the factor, when known.
    pub shape: Option<Shape>,
}

/// Matmul parallelism: use the pool when called from outside a rayon worker,
/// stay sequential inside one (trials are already parallel there).
pub(crate) fn parallelism() -> Par {
    if rayon::current_thread_index().is_some() || rayon::current_num_threads() == 1 {
        Par::Seq
    } else {
        Par::rayon(0)
    }
}

const MAGIC: &[u8; 4] = b"CKFM";
const FORMAT_VERSION: u32 = 1;

impl FactorMatrix {
    /// Wrap an arbitrary matrix.
    pub fn external(entries: Mat<f64>) -> Self {
        Self { entries, tag: ModelTag::External, seed: 0, shape: None }
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Dense `(1/m) F Fᵀ` (both triangles filled).
    pub fn gram(&self) -> Mat<f64> {
        let n = self.rows();
        let mut g = Mat::<f64>::zeros(n, n);
        faer::linalg::matmul::matmul(
            g.as_mut(),
            Accum::Replace,
            self.entries.as_ref(),
            self.entries.transpose(),
            1.0 / self.cols() as f64,
            parallelism(),
        );
        g
    }

    /// `(1/m) F Fᵀ` with only the lower triangle (diagonal included) written;
    /// the strict upper triangle is zero. Half the flops of [`Self::gram`].
    pub fn gram_lower(&self) -> Mat<f64> {
        use faer::linalg::matmul::triangular::{matmul, BlockStructure};
        let n = self.rows();
        let mut g = Mat::<f64>::zeros(n, n);
        matmul(
            g.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Replace,
            self.entries.as_ref(),
            BlockStructure::Rectangular,
            self.entries.transpose(),
            BlockStructure::Rectangular,
            1.0 / self.cols() as f64,
            parallelism(),
        );
        g
    }

    /// `(1/m) Σᵢⱼ Fᵢⱼ²`, the trace of `M`.
    pub fn gram_trace(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.cols() {
            s += self.entries.col_as_slice(j).iter().map(|v| v * v).sum::<f64>();
        }
        s / self.cols() as f64
    }

    /// Flat little-endian layout: 4-byte magic `CKFM`, `u32` version, `u64`
    /// rows, `u64` cols, `u64` seed, `u32` tag, `u32` n₀ (0 if unknown), then
    /// `rows · cols` `f64` values in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.cols() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.tag.code().to_le_bytes())?;
        let n0 = self.shape.map_or(0, |s| s.n0 as u32);
        w.write_all(&n0.to_le_bytes())?;
        let mut row = Vec::with_capacity(self.cols() * 8);
        for i in 0..self.rows() {
            row.clear();
            for j in 0..self.cols() {
                row.extend_from_slice(&self.entries[(i, j)].to_le_bytes());
            }
            w.write_all(&row)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: &str| Error::parse("factor file", msg);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let tag = ModelTag::from_code(u32::from_le_bytes(b4)).ok_or_else(|| bad("unknown model tag"))?;
        r.read_exact(&mut b4)?;
        let n0 = u32::from_le_bytes(b4) as usize;
        let mut entries = Mat::<f64>::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                r.read_exact(&mut b8)?;
                entries[(i, j)] = f64::from_le_bytes(b8);
            }
        }
        let shape = if n0 >= 2 { Shape::new(n0, rows, cols).ok() } else { None };
        Ok(Self { entries, tag, seed, shape })
    }
}

fn standard_gaussian(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    EntryDistribution::standard_gaussian().sample_matrix(rows, cols, seed)
}

/// `Y = f(WX/√n₀)` with `W`, `X` drawn from role-separated streams of `seed`.
///
/// `f` must already be centered at `σ_w σ_x` (see [`Activation::centered`]).
pub fn conjugate_kernel_factor(
    shape: Shape,
    dist_w: &EntryDistribution,
    dist_x: &EntryDistribution,
    f: &Activation,
    seed: u64,
) -> Result<FactorMatrix> {
    let sigma = (dist_w.variance() * dist_x.variance()).sqrt();
    if !f.is_centered_for(sigma) {
        return Err(Error::Parameter(format!(
            "activation {f} is not centered at sigma = {sigma}; call Activation::centered first"
        )));
    }
    let w = dist_w.sample_matrix(shape.n1, shape.n0, derive_seed(seed, Role::Weights, 0));
    let x = dist_x.sample_matrix(shape.n0, shape.m, derive_seed(seed, Role::Data, 0));
    let mut y = Mat::<f64>::zeros(shape.n1, shape.m);
    faer::linalg::matmul::matmul(
        y.as_mut(),
        Accum::Replace,
        w.as_ref(),
        x.as_ref(),
        1.0 / (shape.n0 as f64).sqrt(),
        parallelism(),
    );
    drop(x);
    drop(w);
    for j in 0..shape.m {
        for (i, v) in y.col_as_slice_mut(j).iter_mut().enumerate() {
            let out = f.eval(*v);
            if !out.is_finite() {
                return Err(Error::ActivationOverflow { row: i, col: j, magnitude: v.abs() });
            }
            *v = out;
        }
    }
    Ok(FactorMatrix { entries: y, tag: ModelTag::Nonlinear, seed, shape: Some(shape) })
}

/// A linear surrogate factor
/// `√(θ₁−θ₂)·Z̃ + √(θ₂/n₀)·W̃X̃ + spike` with Gaussian `Z̃, W̃, X̃`.
///
/// κ values are passed explicitly so thresholds can be probed without a
/// concrete entry law.
pub fn linear_surrogate_factor(
    shape: Shape,
    thetas: &ThetaParams,
    kappa_w: f64,
    kappa_x: f64,
    variant: SurrogateVariant,
    seed: u64,
) -> Result<FactorMatrix> {
    let ThetaParams { theta1, theta2, theta3, .. } = *thetas;
    if !(theta2 >= 0.0 && theta3 >= 0.0) || theta1 < theta2 {
        return Err(Error::Parameter(format!(
            "need 0 <= theta2 <= theta1 and theta3 >= 0, got ({theta1}, {theta2}, {theta3})"
        )));
    }
    if !(kappa_w >= 0.0 && kappa_x >= 0.0) {
        return Err(Error::Parameter(format!("kappas must be >= 0, got {kappa_w}, {kappa_x}")));
    }
    if variant == SurrogateVariant::AllOnes && theta2.abs() >= THETA2_ZERO_TOL {
        return Err(Error::Hypothesis(format!(
            "all-ones information-plus-noise model needs theta2 = 0, got {theta2}"
        )));
    }
    let Shape { n0, n1, m } = shape;
    let mut f = standard_gaussian(n1, m, derive_seed(seed, Role::Noise, 0));
    let noise_scale = (theta1 - theta2).sqrt();
    if noise_scale != 1.0 {
        for j in 0..m {
            f.col_as_slice_mut(j).iter_mut().for_each(|v| *v *= noise_scale);
        }
    }
    if theta2 > 0.0 {
        let wt = standard_gaussian(n1, n0, derive_seed(seed, Role::SurrogateWeights, 0));
        let xt = standard_gaussian(n0, m, derive_seed(seed, Role::SurrogateData, 0));
        faer::linalg::matmul::matmul(
            f.as_mut(),
            Accum::Add,
            wt.as_ref(),
            xt.as_ref(),
            (theta2 / n0 as f64).sqrt(),
            parallelism(),
        );
    }
    let kappa = kappa_w.max(kappa_x);
    match variant {
        SurrogateVariant::Plain => {}
        SurrogateVariant::J2 => {
            let c = (4.0 * theta3 / n0 as f64).sqrt();
            let (r, k) = (n1.div_ceil(2), m.div_ceil(2));
            let (a, b) = (c * kappa_w.sqrt(), c * kappa_x.sqrt());
            for j in 0..m {
                let col = f.col_as_slice_mut(j);
                if j < k {
                    col[..r].iter_mut().for_each(|v| *v += a);
                } else {
                    col[r..].iter_mut().for_each(|v| *v += b);
                }
            }
        }
        SurrogateVariant::AllOnes => {
            let c = (theta3 * kappa / n0 as f64).sqrt();
            for j in 0..m {
                f.col_as_slice_mut(j).iter_mut().for_each(|v| *v += c);
            }
        }
        SurrogateVariant::GaussianSpike => {
            let c = (theta3 * kappa / n0 as f64).sqrt();
            let u = standard_gaussian(n1, 1, derive_seed(seed, Role::SpikeLeft, 0));
            let v = standard_gaussian(m, 1, derive_seed(seed, Role::SpikeRight, 0));
            let u = u.col_as_slice(0);
            for j in 0..m {
                let cv = c * v[(j, 0)];
                for (x, ui) in f.col_as_slice_mut(j).iter_mut().zip(u) {
                    *x += cv * ui;
                }
            }
        }
    }
    Ok(FactorMatrix { entries: f, tag: variant.tag(), seed, shape: Some(shape) })
}

/// A samplable model: the nonlinear ensemble or one of its surrogates.
#[derive(Debug, Clone)]
pub enum Model {
    Nonlinear {
        dist_w: EntryDistribution,
        dist_x: EntryDistribution,
        activation: Activation,
    },
    Surrogate {
        thetas: ThetaParams,
        kappa_w: f64,
        kappa_x: f64,
        variant: SurrogateVariant,
    },
}

impl Model {
    /// The nonlinear model, centering `activation` at `σ_w σ_x`.
    pub fn nonlinear(dist_w: EntryDistribution, dist_x: EntryDistribution, activation: &Activation) -> Result<Self> {
        let sigma = (dist_w.variance() * dist_x.variance()).sqrt();
        let activation = activation.centered(sigma)?;
        Ok(Model::Nonlinear { dist_w, dist_x, activation })
    }

    pub fn sample(&self, shape: Shape, seed: u64) -> Result<FactorMatrix> {
        match self {
            Model::Nonlinear { dist_w, dist_x, activation } => {
                conjugate_kernel_factor(shape, dist_w, dist_x, activation, seed)
            }
            Model::Surrogate { thetas, kappa_w, kappa_x, variant } => {
                linear_surrogate_factor(shape, thetas, *kappa_w, *kappa_x, *variant, seed)
            }
        }
    }

    pub fn tag(&self) -> ModelTag {
        match self {
            Model::Nonlinear { .. } => ModelTag::Nonlinear,
            Model::Surrogate { variant, .. } => variant.tag(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::theta_params;

    fn thetas(t1: f64, t2: f64, t3: f64) -> ThetaParams {
        ThetaParams { theta1: t1, theta2: t2, theta3: t3, sigma_product: 1.0 }
    }

    #[test]
    fn shape_ratios() {
        let s = Shape::from_ratios(2000, 0.1, 1.0).unwrap();
        assert_eq!((s.n0, s.n1, s.m), (2000, 2000, 20000));
        assert!((s.gamma() - s.n1 as f64 / s.m as f64).abs() < 1e-15);
        assert!(Shape::new(1, 4, 4).is_err());
    }

    #[test]
    fn identity_activation_is_scaled_product() {
        let shape = Shape::new(5, 4, 6).unwrap();
        let g = EntryDistribution::standard_gaussian();
        let f = conjugate_kernel_factor(shape, &g, &g, &Activation::identity(), 3).unwrap();
        let w = g.sample_matrix(4, 5, derive_seed(3, Role::Weights, 0));
        let x = g.sample_matrix(5, 6, derive_seed(3, Role::Data, 0));
        let wx = &w * &x;
        for i in 0..4 {
            for j in 0..6 {
                assert!((f.entries[(i, j)] - wx[(i, j)] / 5f64.sqrt()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn uncentered_activation_is_rejected() {
        let shape = Shape::new(4, 4, 4).unwrap();
        let g = EntryDistribution::standard_gaussian();
        let f = Activation::polynomial(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(conjugate_kernel_factor(shape, &g, &g, &f, 1).is_err());
        let model = Model::nonlinear(g.clone(), g, &f).unwrap();
        assert!(model.sample(shape, 1).is_ok());
    }

    #[test]
    fn overflow_reports_magnitude() {
        let shape = Shape::new(4, 4, 4).unwrap();
        let g = EntryDistribution::gaussian(1e4).unwrap();
        // x¹⁰¹ is odd, hence centered; at |x| ~ 10⁴ it exceeds f64::MAX.
        let mut coeffs = vec![0.0; 102];
        coeffs[101] = 1.0;
        let f = Activation::polynomial(coeffs).unwrap();
        match conjugate_kernel_factor(shape, &g, &g, &f, 1) {
            Err(Error::ActivationOverflow { magnitude, .. }) => assert!(magnitude > 1e3),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn surrogate_without_extra_terms_is_scaled_noise() {
        let shape = Shape::new(6, 5, 7).unwrap();
        let f = linear_surrogate_factor(shape, &thetas(2.0, 0.0, 0.0), 0.0, 0.0, SurrogateVariant::Plain, 9).unwrap();
        let z = standard_gaussian(5, 7, derive_seed(9, Role::Noise, 0));
        for i in 0..5 {
            for j in 0..7 {
                assert!((f.entries[(i, j)] - 2f64.sqrt() * z[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn all_ones_spike_strength() {
        // With a pure spike the only nonzero eigenvalue of M is θ₃κ n₁/n₀.
        let shape = Shape::new(10, 20, 40).unwrap();
        let t = thetas(1.0, 0.0, 0.5);
        let full = linear_surrogate_factor(shape, &t, 2.0, 0.0, SurrogateVariant::AllOnes, 1).unwrap();
        let noise = linear_surrogate_factor(shape, &t, 2.0, 0.0, SurrogateVariant::Plain, 1).unwrap();
        let spike = Mat::<f64>::from_fn(20, 40, |i, j| full.entries[(i, j)] - noise.entries[(i, j)]);
        let m = FactorMatrix::external(spike).gram();
        let trace: f64 = (0..20).map(|i| m[(i, i)]).sum();
        let expected = 0.5 * 2.0 * 20.0 / 10.0;
        assert!((trace - expected).abs() < 1e-12);
        // Rank one: Frobenius² equals trace².
        let fro2: f64 = (0..20).flat_map(|i| (0..20).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].powi(2)).sum();
        assert!((fro2 - expected * expected).abs() < 1e-10);
    }

    #[test]
    fn all_ones_needs_vanishing_theta2() {
        let shape = Shape::new(4, 4, 4).unwrap();
        let err = linear_surrogate_factor(shape, &thetas(1.0, 0.5, 0.1), 1.0, 1.0, SurrogateVariant::AllOnes, 0);
        assert!(matches!(err, Err(Error::Hypothesis(_))));
        let err = linear_surrogate_factor(shape, &thetas(1.0, 1.5, 0.1), 1.0, 1.0, SurrogateVariant::Plain, 0);
        assert!(matches!(err, Err(Error::Parameter(_))));
    }

    #[test]
    fn binary_round_trip() {
        let shape = Shape::new(3, 4, 5).unwrap();
        let f = linear_surrogate_factor(shape, &thetas(1.0, 0.3, 0.2), 2.0, 1.0, SurrogateVariant::J2, 77).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 40 + 8 * 20);
        let g = FactorMatrix::read_binary(buf.as_slice()).unwrap();
        assert!(g.entries == f.entries);
        assert_eq!((g.tag, g.seed, g.shape), (f.tag, f.seed, f.shape));
        buf[0] = b'X';
        assert!(FactorMatrix::read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn centered_square_model_builds() {
        let f = Activation::even_centered_monomial(1, true).unwrap();
        let t = theta_params(&f, 1.0, 1e-10).unwrap();
        assert!(t.theta2.abs() < THETA2_ZERO_TOL);
    }

    #[test]
    fn lower_gram_matches_full() {
        let g = EntryDistribution::standard_gaussian();
        let f = FactorMatrix::external(g.sample_matrix(37, 53, 4));
        let (full, lower) = (f.gram(), f.gram_lower());
        for j in 0..37 {
            for i in 0..37 {
                let want = if i >= j { full[(i, j)] } else { 0.0 };
                assert!((lower[(i, j)] - want).abs() < 1e-12);
            }
        }
    }
}
