//! Experiment configuration files.
//!
//! A config is flat `key = value` text; `#` starts a comment. Keys:
//!
//! | key | value | default |
//! |-----|-------|---------|
//! | `n0`, `n1`, `m` | dimensions | `n1 = 2000`, `n0 = n1`, `m = 10 n0` |
//! | `phi`, `psi` | ratios, alternative to `n0`/`m` (need `n1`) | |
//! | `dist_w`, `dist_x` | entry laws, e.g. `gaussian`, `mix(0.5*rademacher+0.5*gaussian)` | `gaussian` |
//! | `activation` | e.g. `evenmono(k=1,normalize=true)`, `cos(alpha=1.5)` | `evenmono(k=1,normalize=true)` |
//! | `model` | `nonlinear`, `linear-plain`, `linear-J2`, `info-plus-noise-J`, `info-plus-noise-gaussian-spike` | `nonlinear` |
//! | `trials`, `seed` | counts | `1`, `0` |
//! | `out` | output directory | `out` |
//! | `convention` | `covariant` or `paper` | `covariant` |
//! | `bins` | `fd`, `count:<n>` or `width:<w>` | `fd` |
//! | `top_k` | `0` for the full spectrum | `0` |
//! | `ridge` | ridge penalty for `loss` | `0.1` |
//! | `q_max` | highest moment for `moments` | `4` |
//! | `outlier_buffer` | `c` in `edge·(1 + c n1^(-2/3))` | `5` |
//!
//! [`ExperimentConfig::to_canonical`] writes every key in the order above
//! with `n0`/`n1`/`m` resolved, and parsing that text gives back the same
//! configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::activations::Activation;
use crate::distributions::EntryDistribution;
use crate::ensemble::{ModelTag, Shape, SurrogateVariant};
use crate::error::{Error, Result};
use crate::spectra::Binning;
use crate::theory::{Convention, OUTLIER_BUFFER};

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelTag::Nonlinear => "nonlinear",
            ModelTag::LinearPlain => "linear-plain",
            ModelTag::LinearJ2 => "linear-J2",
            ModelTag::InfoPlusNoiseJ => "info-plus-noise-J",
            ModelTag::InfoPlusNoiseGaussianSpike => "info-plus-noise-gaussian-spike",
            ModelTag::External => "external",
        })
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "nonlinear" => ModelTag::Nonlinear,
            "linear-plain" => ModelTag::LinearPlain,
            "linear-J2" => ModelTag::LinearJ2,
            "info-plus-noise-J" => ModelTag::InfoPlusNoiseJ,
            "info-plus-noise-gaussian-spike" => ModelTag::InfoPlusNoiseGaussianSpike,
            "external" => ModelTag::External,
            other => return Err(Error::parse("model", format!("unknown model {other:?}"))),
        })
    }
}

impl ModelTag {
    /// The surrogate variant for a surrogate tag.
    pub fn variant(self) -> Option<SurrogateVariant> {
        match self {
            ModelTag::LinearPlain => Some(SurrogateVariant::Plain),
            ModelTag::LinearJ2 => Some(SurrogateVariant::J2),
            ModelTag::InfoPlusNoiseJ => Some(SurrogateVariant::AllOnes),
            ModelTag::InfoPlusNoiseGaussianSpike => Some(SurrogateVariant::GaussianSpike),
            ModelTag::Nonlinear | ModelTag::External => None,
        }
    }
}

impl fmt::Display for Binning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binning::FreedmanDiaconis => f.write_str("fd"),
            Binning::Count(n) => write!(f, "count:{n}"),
            Binning::Width(w) => write!(f, "width:{w}"),
        }
    }
}

impl FromStr for Binning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::parse("bins", format!("expected fd, count:<n> or width:<w>, got {s:?}"));
        if s == "fd" {
            return Ok(Binning::FreedmanDiaconis);
        }
        let (kind, v) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "count" => v.parse::<usize>().ok().filter(|&n| n > 0).map(Binning::Count).ok_or_else(bad),
            "width" => v.parse::<f64>().ok().filter(|&w| w > 0.0).map(Binning::Width).ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub shape: Shape,
    pub dist_w: EntryDistribution,
    pub dist_x: EntryDistribution,
    pub activation: Activation,
    pub model: ModelTag,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub convention: Convention,
    pub bins: Binning,
    pub top_k: usize,
    pub ridge: f64,
    pub q_max: usize,
    pub outlier_buffer: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            shape: Shape { n0: 2000, n1: 2000, m: 20000 },
            dist_w: EntryDistribution::standard_gaussian(),
            dist_x: EntryDistribution::standard_gaussian(),
            activation: Activation::even_centered_monomial(1, true).expect("k = 1 is valid"),
            model: ModelTag::Nonlinear,
            trials: 1,
            seed: 0,
            out: PathBuf::from("out"),
            convention: Convention::Covariant,
            bins: Binning::FreedmanDiaconis,
            top_k: 0,
            ridge: 0.1,
            q_max: 4,
            outlier_buffer: OUTLIER_BUFFER,
        }
    }
}

const KEYS: [&str; 18] = [
    "n0",
    "n1",
    "m",
    "phi",
    "psi",
    "dist_w",
    "dist_x",
    "activation",
    "model",
    "trials",
    "seed",
    "out",
    "convention",
    "bins",
    "top_k",
    "ridge",
    "q_max",
    "outlier_buffer",
];

fn field_error(line: usize, key: &str, err: Error) -> Error {
    let message = match err {
        Error::Parse { context, message } if context == key || context.is_empty() => message,
        Error::Parse { context, message } => format!("{context}: {message}"),
        other => other.to_string(),
    };
    Error::parse(format!("config line {line}, field `{key}`"), message)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        let (mut n0, mut n1, mut m, mut phi, mut psi) = (None, None, None, None, None);
        let mut shape_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("config line {line}"), format!("expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !KEYS.contains(&key) {
                return Err(Error::parse(format!("config line {line}"), format!("unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(format!("config line {line}"), format!("duplicate key {key:?}")));
            }
            let fe = |e: Error| field_error(line, key, e);
            let count = |v: &str| -> Result<usize> {
                v.parse::<usize>().map_err(|_| Error::parse(key, format!("expected a nonnegative integer, got {v:?}")))
            };
            let real = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(key, format!("expected a number, got {v:?}")))
            };
            match key {
                "n0" => n0 = Some(count(value).map_err(fe)?),
                "n1" => n1 = Some(count(value).map_err(fe)?),
                "m" => m = Some(count(value).map_err(fe)?),
                "phi" => phi = Some(real(value).map_err(fe)?),
                "psi" => psi = Some(real(value).map_err(fe)?),
                "dist_w" => cfg.dist_w = value.parse().map_err(fe)?,
                "dist_x" => cfg.dist_x = value.parse().map_err(fe)?,
                "activation" => cfg.activation = value.parse().map_err(fe)?,
                "model" => cfg.model = value.parse().map_err(fe)?,
                "trials" => cfg.trials = count(value).map_err(fe)?,
                "seed" => {
                    cfg.seed = value
                        .parse::<u64>()
                        .map_err(|_| fe(Error::parse(key, format!("expected a 64-bit unsigned integer, got {value:?}"))))?
                }
                "out" => cfg.out = PathBuf::from(value),
                "convention" => cfg.convention = value.parse().map_err(fe)?,
                "bins" => cfg.bins = value.parse().map_err(fe)?,
                "top_k" => cfg.top_k = count(value).map_err(fe)?,
                "ridge" => cfg.ridge = real(value).map_err(fe)?,
                "q_max" => cfg.q_max = count(value).map_err(fe)?,
                "outlier_buffer" => cfg.outlier_buffer = real(value).map_err(fe)?,
                _ => unreachable!("filtered by KEYS"),
            }
            if matches!(key, "n0" | "n1" | "m" | "phi" | "psi") {
                shape_line = line;
            }
        }
        let shape_err = |msg: String| Error::parse(format!("config line {shape_line}, field `shape`"), msg);
        if (phi.is_some() || psi.is_some()) && (n0.is_some() || m.is_some()) {
            return Err(shape_err("give either n0/m or phi/psi, not both".into()));
        }
        let n1 = n1.unwrap_or(cfg.shape.n1);
        cfg.shape = match (phi, psi) {
            (Some(phi), Some(psi)) => Shape::from_ratios(n1, phi, psi).map_err(|e| shape_err(e.to_string()))?,
            (None, None) => {
                let n0 = n0.unwrap_or(n1);
                Shape::new(n0, n1, m.unwrap_or(10 * n0)).map_err(|e| shape_err(e.to_string()))?
            }
            _ => return Err(shape_err("phi and psi must be given together".into())),
        };
        if cfg.trials == 0 {
            return Err(Error::parse("config field `trials`", "must be >= 1"));
        }
        Ok(cfg)
    }

    pub fn to_canonical(&self) -> String {
        let s = self.shape;
        format!(
            "n0 = {}\nn1 = {}\nm = {}\ndist_w = {}\ndist_x = {}\nactivation = {}\nmodel = {}\ntrials = {}\nseed = {}\nout = {}\nconvention = {}\nbins = {}\ntop_k = {}\nridge = {}\nq_max = {}\noutlier_buffer = {}\n",
            s.n0,
            s.n1,
            s.m,
            self.dist_w,
            self.dist_x,
            self.activation,
            self.model,
            self.trials,
            self.seed,
            self.out.display(),
            self.convention,
            self.bins,
            self.top_k,
            self.ridge,
            self.q_max,
            self.outlier_buffer,
        )
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}
