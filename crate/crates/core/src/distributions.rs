//! Entry laws for the weight matrix `W` and the data matrix `X`.
//!
//! Every law is centered with vanishing third moment; its variance and fourth
//! moment are known exactly and carried alongside the sampler so that the
//! excess kurtosis `κ = μ₄/σ⁴ − 1` entering the outlier predictions never has
//! to be estimated from samples.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parse;
use crate::rng;

/// Relative tolerance for the zero-mean and zero-third-moment checks on tables.
const MOMENT_TOL: f64 = 1e-12;

/// The shape of an entry law.
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Gaussian { variance: f64 },
    /// Symmetric two-point law on `±√variance`.
    Rademacher { variance: f64 },
    /// Finite mixture; weights sum to one.
    Mixture(Vec<(f64, Law)>),
    /// Finite support `(value, probability)`.
    Table(Vec<(f64, f64)>),
}

/// Exact low-order moments of an entry law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    pub third_moment: f64,
    pub fourth_moment: f64,
    /// `μ₄ / σ⁴`.
    pub kurtosis: f64,
    /// `μ₄ / σ⁴ − 1`, the κ of the outlier formulas (not the usual `kurt − 3`).
    pub kappa: f64,
}

/// A samplable entry law together with its exact moments.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryDistribution {
    law: Law,
    moments: MomentSummary,
    tail_exponent_hint: Option<f64>,
}

fn raw_moments(law: &Law) -> [f64; 4] {
    match law {
        Law::Gaussian { variance } => [0.0, *variance, 0.0, 3.0 * variance * variance],
        Law::Rademacher { variance } => [0.0, *variance, 0.0, variance * variance],
        Law::Mixture(parts) => {
            let mut acc = [0.0; 4];
            for (w, l) in parts {
                let m = raw_moments(l);
                for k in 0..4 {
                    acc[k] += w * m[k];
                }
            }
            acc
        }
        Law::Table(points) => {
            let mut acc = [0.0; 4];
            for &(x, p) in points {
                acc[0] += p * x;
                acc[1] += p * x * x;
                acc[2] += p * x * x * x;
                acc[3] += p * x * x * x * x;
            }
            acc
        }
    }
}

fn validate(law: &Law) -> Result<()> {
    match law {
        Law::Gaussian { variance } | Law::Rademacher { variance } => {
            if !(variance.is_finite() && *variance > 0.0) {
                return Err(Error::Parameter(format!("variance must be positive, got {variance}")));
            }
        }
        Law::Mixture(parts) => {
            if parts.is_empty() {
                return Err(Error::Parameter("mixture needs at least one component".into()));
            }
            let mut total = 0.0;
            for (w, l) in parts {
                if !(w.is_finite() && *w >= 0.0) {
                    return Err(Error::Parameter(format!("mixture weight {w} is negative")));
                }
                total += w;
                validate(l)?;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter(format!("mixture weights sum to {total}, not 1")));
            }
        }
        Law::Table(points) => {
            if points.is_empty() {
                return Err(Error::Parameter("table needs at least one support point".into()));
            }
            let mut total = 0.0;
            for &(x, p) in points {
                if !x.is_finite() || !(p.is_finite() && p >= 0.0) {
                    return Err(Error::Parameter(format!("bad table entry {x}:{p}")));
                }
                total += p;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter(format!("table probabilities sum to {total}, not 1")));
            }
        }
    }
    Ok(())
}

/// Exact moments of a law.
///
/// Rejects laws whose mean or third moment is not zero.
pub fn moment_summary(law: &Law) -> Result<MomentSummary> {
    validate(law)?;
    let [mean, variance, third, fourth] = raw_moments(law);
    let scale = variance.sqrt();
    if mean.abs() > MOMENT_TOL * scale.max(1.0) {
        return Err(Error::Parameter(format!("law is not centered: mean {mean}")));
    }
    if third.abs() > MOMENT_TOL * (variance * scale).max(1.0) {
        return Err(Error::Parameter(format!("law has nonzero third moment {third}")));
    }
    if !(variance > 0.0) {
        return Err(Error::Parameter("law is degenerate (zero variance)".into()));
    }
    let kurtosis = fourth / (variance * variance);
    Ok(MomentSummary {
        mean: 0.0,
        variance,
        third_moment: 0.0,
        fourth_moment: fourth,
        kurtosis,
        kappa: kurtosis - 1.0,
    })
}

impl EntryDistribution {
    pub fn new(law: Law) -> Result<Self> {
        let moments = moment_summary(&law)?;
        Ok(Self { law, moments, tail_exponent_hint: None })
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        Self::new(Law::Gaussian { variance })
    }

    pub fn standard_gaussian() -> Self {
        Self::gaussian(1.0).expect("unit variance is valid")
    }

    pub fn rademacher() -> Self {
        Self::new(Law::Rademacher { variance: 1.0 }).expect("unit variance is valid")
    }

    /// `p·rademacher + (1 − p)·gaussian`, both with unit variance.
    pub fn rademacher_gaussian_mixture(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!("mixture weight {p} outside [0, 1]")));
        }
        Self::new(Law::Mixture(vec![
            (p, Law::Rademacher { variance: 1.0 }),
            (1.0 - p, Law::Gaussian { variance: 1.0 }),
        ]))
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(Law::Table(points))
    }

    /// Record the exponent of the stretched-exponential tail bound. Metadata
    /// only; nothing checks it.
    pub fn with_tail_exponent_hint(mut self, alpha: f64) -> Self {
        self.tail_exponent_hint = Some(alpha);
        self
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn moments(&self) -> MomentSummary {
        self.moments
    }

    pub fn variance(&self) -> f64 {
        self.moments.variance
    }

    pub fn kappa(&self) -> f64 {
        self.moments.kappa
    }

    pub fn tail_exponent_hint(&self) -> Option<f64> {
        self.tail_exponent_hint
    }

    /// Draw one value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_law(&self.law, rng)
    }

    /// An i.i.d. `rows × cols` matrix, filled column by column from the
    /// stream keyed by `seed`.
    pub fn sample_matrix(&self, rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        let mut rng = rng::stream(seed);
        let mut out = Mat::<f64>::zeros(rows, cols);
        match &self.law {
            Law::Rademacher { variance } => {
                let a = variance.sqrt();
                let mut bits = 0u64;
                let mut left = 0u32;
                for j in 0..cols {
                    for v in out.col_as_slice_mut(j) {
                        if left == 0 {
                            bits = rng.random();
                            left = 64;
                        }
                        *v = if bits & 1 == 1 { a } else { -a };
                        bits >>= 1;
                        left -= 1;
                    }
                }
            }
            Law::Gaussian { variance } => {
                let s = variance.sqrt();
                for j in 0..cols {
                    for v in out.col_as_slice_mut(j) {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = s * z;
                    }
                }
            }
            law => {
                for j in 0..cols {
                    for v in out.col_as_slice_mut(j) {
                        *v = sample_law(law, &mut rng);
                    }
                }
            }
        }
        out
    }
}

fn sample_law<R: Rng + ?Sized>(law: &Law, rng: &mut R) -> f64 {
    match law {
        Law::Gaussian { variance } => {
            let z: f64 = rng.sample(StandardNormal);
            variance.sqrt() * z
        }
        Law::Rademacher { variance } => {
            if rng.random::<bool>() {
                variance.sqrt()
            } else {
                -variance.sqrt()
            }
        }
        Law::Mixture(parts) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (w, l) in parts {
                acc += w;
                if u < acc {
                    return sample_law(l, rng);
                }
            }
            sample_law(&parts[parts.len() - 1].1, rng)
        }
        Law::Table(points) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for &(x, p) in points {
                acc += p;
                if u < acc {
                    return x;
                }
            }
            points[points.len() - 1].0
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::Gaussian { variance } if *variance == 1.0 => write!(f, "gaussian"),
            Law::Gaussian { variance } => write!(f, "gaussian(var={variance})"),
            Law::Rademacher { variance } if *variance == 1.0 => write!(f, "rademacher"),
            Law::Rademacher { variance } => write!(f, "rademacher(var={variance})"),
            Law::Mixture(parts) => {
                write!(f, "mix(")?;
                for (i, (w, l)) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{w}*{l}")?;
                }
                write!(f, ")")
            }
            Law::Table(points) => {
                write!(f, "table(")?;
                for (i, (x, p)) in points.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}:{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.law, self.tail_exponent_hint) {
            (Law::Gaussian { variance }, Some(t)) => write!(f, "gaussian(var={variance},tail={t})"),
            (Law::Rademacher { variance }, Some(t)) => {
                write!(f, "rademacher(var={variance},tail={t})")
            }
            (law, _) => write!(f, "{law}"),
        }
    }
}

fn parse_law(s: &str) -> Result<(Law, Option<f64>)> {
    let c = parse::call(s)?;
    match c.name {
        "gaussian" | "normal" | "rademacher" | "ber" => {
            let mut variance = 1.0;
            let mut tail = None;
            for (k, v) in parse::key_values(c.inner)? {
                match k {
                    "var" => variance = parse::number(s, v)?,
                    "tail" => tail = Some(parse::number(s, v)?),
                    other => return Err(Error::parse(s, format!("unknown key '{other}'"))),
                }
            }
            let law = if matches!(c.name, "gaussian" | "normal") {
                Law::Gaussian { variance }
            } else {
                Law::Rademacher { variance }
            };
            Ok((law, tail))
        }
        "mix" => {
            let mut parts = Vec::new();
            for term in parse::split_top_level(c.inner, '+')? {
                let (w, l) = term
                    .split_once('*')
                    .ok_or_else(|| Error::parse(term, "expected weight*law"))?;
                parts.push((parse::number(term, w.trim())?, parse_law(l)?.0));
            }
            Ok((Law::Mixture(parts), None))
        }
        "table" => {
            let mut points = Vec::new();
            for term in parse::split_top_level(c.inner, ',')? {
                let (x, p) = term
                    .split_once(':')
                    .ok_or_else(|| Error::parse(term, "expected value:probability"))?;
                points.push((parse::number(term, x.trim())?, parse::number(term, p.trim())?));
            }
            Ok((Law::Table(points), None))
        }
        other => Err(Error::parse(s, format!("unknown distribution '{other}'"))),
    }
}

impl FromStr for EntryDistribution {
    type Err = Error;

    /// Accepts `gaussian`, `gaussian(var=2)`, `rademacher`,
    /// `mix(0.25*rademacher+0.75*gaussian)` and `table(-1:0.5,1:0.5)`.
    fn from_str(s: &str) -> Result<Self> {
        let (law, tail) = parse_law(s)?;
        let mut d = EntryDistribution::new(law)?;
        d.tail_exponent_hint = tail;
        Ok(d)
    }
}
