//! Eigenvalues of `M = (1/m) F Fᵀ`: dense, top-k by Lanczos, and the
//! spectral functionals built on them.

use std::io::{BufRead, Write};
use std::time::Instant;

use faer::{Accum, ColRef, Mat, MatRef, Side};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{parallelism, FactorMatrix, ModelTag, Shape};
use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen;
use crate::rng::{derive_seed, stream, Role};

/// Eigenvalues in descending order, with the factor they came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    pub tag: ModelTag,
    pub shape: Option<Shape>,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    /// Seconds spent in the eigensolver.
    pub wall_time: f64,
    /// False when the Krylov solver stopped before reaching its tolerance.
    pub converged: bool,
}

impl SpectrumResult {
    fn new(factor: &FactorMatrix, mut eigenvalues: Vec<f64>, started: Instant, converged: bool) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self {
            eigenvalues,
            tag: factor.tag,
            shape: factor.shape,
            rows: factor.rows(),
            cols: factor.cols(),
            seed: factor.seed,
            wall_time: started.elapsed().as_secs_f64(),
            converged,
        }
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    /// Ascending copy, as needed by CDF comparisons.
    pub fn ascending(&self) -> Vec<f64> {
        self.eigenvalues.iter().rev().copied().collect()
    }

    /// One value per line, descending.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.eigenvalues {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Read a one-value-per-line eigenvalue file (blank lines and `#` comments skipped).
pub fn read_eigenvalue_csv<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse(format!("eigenvalue file line {}", lineno + 1), format!("not a number: {t:?}")))?;
        out.push(v);
    }
    Ok(out)
}

/// All `n₁` eigenvalues of `M` from a dense symmetric eigendecomposition.
///
/// When `m < n₁` the `n₁ − m` structural zeros are part of the result.
pub fn full_spectrum(factor: &FactorMatrix) -> Result<SpectrumResult> {
    let started = Instant::now();
    let values = dense_eigenvalues(factor.gram_lower().as_ref())?;
    Ok(SpectrumResult::new(factor, values, started, true))
}

/// Eigenvalues of the `m × m` companion `(1/m) Fᵀ F`.
pub fn companion_spectrum(factor: &FactorMatrix) -> Result<SpectrumResult> {
    let started = Instant::now();
    let m = factor.cols();
    let mut g = Mat::<f64>::zeros(m, m);
    faer::linalg::matmul::matmul(
        g.as_mut(),
        Accum::Replace,
        factor.entries.transpose(),
        factor.entries.as_ref(),
        1.0 / m as f64,
        parallelism(),
    );
    let values = dense_eigenvalues(g.as_ref())?;
    Ok(SpectrumResult::new(factor, values, started, true))
}

fn dense_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("dense symmetric eigensolver failed: {e:?}")))
}

/// A symmetric linear map accessed only through products.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// `y ← A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// `v ↦ (1/m) F (Fᵀ v)` without forming `F Fᵀ`.
pub struct GramOperator<'a> {
    factor: MatRef<'a, f64>,
    scratch: std::cell::RefCell<Mat<f64>>,
}

impl<'a> GramOperator<'a> {
    pub fn new(factor: &'a FactorMatrix) -> Self {
        Self { factor: factor.entries.as_ref(), scratch: Mat::zeros(factor.cols(), 1).into() }
    }
}

impl SymmetricOperator for GramOperator<'_> {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let par = parallelism();
        let m = self.factor.ncols();
        let mut t = self.scratch.borrow_mut();
        let x = ColRef::from_slice(x).as_mat();
        faer::linalg::matmul::matmul(t.as_mut(), Accum::Replace, self.factor.transpose(), x, 1.0, par);
        let y = faer::ColMut::from_slice_mut(y).as_mat_mut();
        faer::linalg::matmul::matmul(y, Accum::Replace, self.factor, t.as_ref(), 1.0 / m as f64, par);
    }
}

/// A dense symmetric matrix as an operator (used in tests and for small cases).
pub struct DenseOperator<'a>(pub MatRef<'a, f64>);

impl SymmetricOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let x = ColRef::from_slice(x).as_mat();
        let y = faer::ColMut::from_slice_mut(y).as_mat_mut();
        faer::linalg::matmul::matmul(y, Accum::Replace, self.0, x, 1.0, faer::Par::Seq);
    }
}

/// Outcome of a Lanczos run.
#[derive(Debug, Clone)]
pub struct LanczosOutcome {
    /// Largest Ritz values, descending.
    pub values: Vec<f64>,
    /// `β_j |s_{j,i}|` for each returned value.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalize `w` against `basis` twice (classical Gram-Schmidt).
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) {
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
        }
    }
}

/// Iteration cap: `10·k·√n`, at most `n`.
pub fn lanczos_max_iterations(k: usize, n: usize) -> usize {
    ((10.0 * k as f64 * (n as f64).sqrt()).ceil() as usize).clamp(k.min(n), n)
}

/// `k` largest eigenvalues of `op` by Lanczos with full reorthogonalization.
///
/// A Ritz value is accepted when its residual is below `tol · max(|θ|, θ_max·ε)`.
/// An invariant subspace (β ≈ 0) restarts from a fresh random vector
/// orthogonal to the basis built so far, but only when fewer than `k` Ritz
/// values exist yet. As with any single-vector Krylov method, multiplicities
/// of exactly repeated eigenvalues are not detected.
pub fn lanczos_top_k(op: &dyn SymmetricOperator, k: usize, tol: f64, seed: u64) -> Result<LanczosOutcome> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("need 1 <= k <= {n}, got k = {k}")));
    }
    let max_iter = lanczos_max_iterations(k, n);
    let mut rng = stream(derive_seed(seed, Role::Lanczos, 0));
    let random_unit = |rng: &mut rand_chacha::ChaCha8Rng, basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..5 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            reorthogonalize(basis, &mut v);
            let nv = norm(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|x| *x /= nv);
                return Some(v);
            }
        }
        None
    };

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter.min(n));
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut v = random_unit(&mut rng, &basis).expect("nonempty space");
    let mut w = vec![0.0; n];
    let mut scale = 0.0f64;
    let mut last = LanczosOutcome { values: vec![], residuals: vec![], iterations: 0, converged: false };

    for j in 0..max_iter {
        op.apply(&v, &mut w);
        let a = dot(&v, &w);
        basis.push(std::mem::take(&mut v));
        alpha.push(a);
        reorthogonalize(&basis, &mut w);
        let b = norm(&w);

        let size = j + 1;
        let eig = tridiagonal_eigen(&alpha, &beta, &[size - 1])?;
        scale = scale.max(eig.values.iter().fold(0.0f64, |s, x| s.max(x.abs())));
        let exhausted = size == n;
        let take = k.min(size);
        let mut values = Vec::with_capacity(take);
        let mut residuals = Vec::with_capacity(take);
        for idx in (size - take..size).rev() {
            values.push(eig.values[idx]);
            residuals.push(b * eig.rows[0][idx].abs());
        }
        let floor = scale * f64::EPSILON * 10.0;
        let converged = take == k
            && (exhausted || values.iter().zip(&residuals).all(|(t, r)| *r <= tol * t.abs().max(floor)));
        last = LanczosOutcome { values, residuals, iterations: size, converged };
        if converged || exhausted {
            break;
        }

        let breakdown = b <= scale.max(f64::MIN_POSITIVE) * 1e-12;
        if breakdown {
            match random_unit(&mut rng, &basis) {
                Some(fresh) => {
                    v = fresh;
                    beta.push(0.0);
                }
                None => {
                    // The basis already spans the whole space numerically.
                    last.converged = take == k;
                    break;
                }
            }
        } else {
            w.iter_mut().for_each(|x| *x /= b);
            beta.push(b);
            v = std::mem::replace(&mut w, vec![0.0; n]);
        }
    }
    Ok(last)
}

/// The `k` largest eigenvalues of `M` using only products with `F` and `Fᵀ`.
///
/// When the iteration cap is reached first, the best Ritz values are returned
/// with `converged = false`.
pub fn top_eigenvalues(factor: &FactorMatrix, k: usize, tol: f64) -> Result<SpectrumResult> {
    let limit = factor.rows().min(factor.cols());
    if k == 0 || k > limit {
        return Err(Error::Parameter(format!("need 1 <= k <= min(n1, m) = {limit}, got {k}")));
    }
    let started = Instant::now();
    let op = GramOperator::new(factor);
    let out = lanczos_top_k(&op, k, tol, factor.seed)?;
    Ok(SpectrumResult::new(factor, out.values, started, out.converged))
}

/// `(1/n) Σ 1/(λᵢ − z)`.
pub fn empirical_stieltjes(eigenvalues: &[f64], z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("Stieltjes transform needs Im z > 0, got {z}")));
    }
    let sum: Complex64 = eigenvalues.iter().map(|&l| 1.0 / (l - z)).sum();
    Ok(sum / eigenvalues.len() as f64)
}

/// Expected ridge training loss `(λ²/m) Σ (μᵢ + λ)⁻²` from the spectrum of
/// `(1/m) YᵀY` (length `m`) and the ridge penalty `λ`.
pub fn ridge_loss_spectral(gram_eigenvalues: &[f64], ridge_penalty: f64) -> Result<f64> {
    if !(ridge_penalty > 0.0) {
        return Err(Error::Parameter(format!("ridge penalty must be > 0, got {ridge_penalty}")));
    }
    if let Some(&neg) = gram_eigenvalues.iter().find(|&&l| l < 0.0) {
        return Err(Error::Parameter(format!("eigenvalues must be >= 0, found {neg}")));
    }
    let m = gram_eigenvalues.len() as f64;
    let s: f64 = gram_eigenvalues.iter().map(|&l| (l + ridge_penalty).powi(-2)).sum();
    Ok(ridge_penalty * ridge_penalty * s / m)
}

/// How histogram bins are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binning {
    FreedmanDiaconis,
    Count(usize),
    Width(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Normalized so that `Σ density · width = 1`.
    pub density: Vec<f64>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Histogram {
    /// Bin `values` over `range` (default: their min and max).
    pub fn new(values: &[f64], binning: Binning, range: Option<(f64, f64)>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("histogram of an empty sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = range.unwrap_or((sorted[0], sorted[sorted.len() - 1]));
        if !(hi >= lo) {
            return Err(Error::Parameter(format!("bad histogram range [{lo}, {hi}]")));
        }
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let bins = match binning {
            Binning::Count(b) => b.max(1),
            Binning::Width(w) if w > 0.0 => ((span / w).ceil() as usize).max(1),
            Binning::Width(w) => return Err(Error::Parameter(format!("bin width must be > 0, got {w}"))),
            Binning::FreedmanDiaconis => {
                let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
                let w = 2.0 * iqr / (sorted.len() as f64).cbrt();
                if w > 0.0 {
                    ((span / w).ceil() as usize).clamp(1, 10_000)
                } else {
                    1
                }
            }
        };
        let width = span / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for &v in &sorted {
            if v < lo || v > hi {
                continue;
            }
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let total = values.len() as f64;
        let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
        Ok(Self { edges, counts, density })
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `center,count,density` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_center,count,density")?;
        for ((c, n), d) in self.centers().iter().zip(&self.counts).zip(&self.density) {
            writeln!(w, "{c},{n},{d}")?;
        }
        Ok(())
    }
}

/// `sup_x |F_n(x) − F(x)|` for an ascending sample and a continuous CDF.
pub fn kolmogorov_distance(ascending: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = ascending.len() as f64;
    ascending
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `sup_x |F_a(x) − F_b(x)|` for two ascending samples.
pub fn two_sample_kolmogorov(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::EntryDistribution;

    fn random_factor(rows: usize, cols: usize, seed: u64) -> FactorMatrix {
        let mut f = FactorMatrix::external(EntryDistribution::standard_gaussian().sample_matrix(rows, cols, seed));
        f.seed = seed;
        f
    }

    #[test]
    fn zero_and_identity_factors() {
        let z = full_spectrum(&FactorMatrix::external(Mat::zeros(5, 7))).unwrap();
        assert!(z.eigenvalues.iter().all(|&v| v == 0.0));
        let m = 9;
        let id = FactorMatrix::external(Mat::<f64>::from_fn(m, m, |i, j| if i == j { (m as f64).sqrt() } else { 0.0 }));
        let s = full_spectrum(&id).unwrap();
        assert!(s.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let t = top_eigenvalues(&id, 1, 1e-10).unwrap();
        assert!((t.largest() - 1.0).abs() < 1e-12 && t.converged);
    }

    #[test]
    fn rank_one_factor() {
        let u: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() + 0.1).collect();
        let v: Vec<f64> = (0..50).map(|j| (j as f64 * 0.11).cos()).collect();
        let f = FactorMatrix::external(Mat::<f64>::from_fn(30, 50, |i, j| u[i] * v[j]));
        let exact = dot(&u, &u) * dot(&v, &v) / 50.0;
        let t = top_eigenvalues(&f, 1, 1e-12).unwrap();
        assert!(((t.largest() - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn lanczos_matches_dense_head() {
        let f = random_factor(300, 400, 5);
        let full = full_spectrum(&f).unwrap();
        let top = top_eigenvalues(&f, 3, 1e-10).unwrap();
        assert!(top.converged);
        for i in 0..3 {
            let rel = (top.eigenvalues[i] - full.eigenvalues[i]).abs() / full.eigenvalues[0];
            assert!(rel < 1e-8, "{i}: {} vs {}", top.eigenvalues[i], full.eigenvalues[i]);
        }
    }

    #[test]
    fn lanczos_handles_invariant_subspaces() {
        // Rank two: the Krylov space closes after three steps and the Ritz
        // values there are exact.
        let d = [5.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let a = Mat::<f64>::from_fn(8, 8, |i, j| if i == j { d[i] } else { 0.0 });
        let out = lanczos_top_k(&DenseOperator(a.as_ref()), 3, 1e-10, 3).unwrap();
        assert!(out.converged);
        for (got, want) in out.values.iter().zip([5.0, 4.0, 0.0]) {
            assert!((got - want).abs() < 1e-10, "{:?}", out.values);
        }
        // A multiple of the identity breaks down at every step; k = n needs a
        // restart each time.
        let a = Mat::<f64>::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.0 });
        let out = lanczos_top_k(&DenseOperator(a.as_ref()), 3, 1e-10, 3).unwrap();
        assert!(out.converged);
        assert!(out.values.iter().all(|v| (v - 2.0).abs() < 1e-12), "{:?}", out.values);
    }

    #[test]
    fn trace_and_companion_agree() {
        let f = random_factor(40, 25, 8);
        let full = full_spectrum(&f).unwrap();
        let comp = companion_spectrum(&f).unwrap();
        let trace: f64 = full.eigenvalues.iter().sum();
        assert!(((trace - f.gram_trace()) / trace).abs() < 1e-10);
        for i in 0..25 {
            assert!((full.eigenvalues[i] - comp.eigenvalues[i]).abs() < 1e-10);
        }
        // m < n₁: the structural zeros are kept.
        assert_eq!(full.eigenvalues.len(), 40);
        assert!(full.eigenvalues[25..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn stieltjes_basics() {
        let s = empirical_stieltjes(&[0.0; 10], Complex64::new(0.0, 1.0)).unwrap();
        assert!((s - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(empirical_stieltjes(&[1.0], Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn ridge_loss_cases() {
        assert!((ridge_loss_spectral(&[0.0; 12], 0.7).unwrap() - 1.0).abs() < 1e-15);
        let mut ev = vec![1e12; 99];
        ev.push(0.3);
        let got = ridge_loss_spectral(&ev, 0.3).unwrap();
        assert!((got - 1.0 / 400.0).abs() < 1e-12);
        assert!(ridge_loss_spectral(&ev, 0.0).is_err());
    }

    #[test]
    fn histogram_mass_and_csv() {
        let vals: Vec<f64> = (0..1000).map(|i| (i as f64 / 1000.0).powi(2)).collect();
        for binning in [Binning::FreedmanDiaconis, Binning::Count(17), Binning::Width(0.05)] {
            let h = Histogram::new(&vals, binning, None).unwrap();
            assert_eq!(h.counts.iter().sum::<u64>(), 1000);
            let w = h.edges[1] - h.edges[0];
            let mass: f64 = h.density.iter().map(|d| d * w).sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
        let h = Histogram::new(&vals, Binning::Count(4), None).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn kolmogorov_uniform() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((kolmogorov_distance(&xs, |x| x.clamp(0.0, 1.0)) - 0.005).abs() < 1e-12);
        assert_eq!(two_sample_kolmogorov(&xs, &xs), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 2.0).collect();
        assert_eq!(two_sample_kolmogorov(&xs, &shifted), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let f = random_factor(6, 4, 1);
        let s = full_spectrum(&f).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = read_eigenvalue_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s.eigenvalues);
    }
}
