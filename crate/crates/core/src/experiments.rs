//! The experiments behind the `cklab` subcommands.
//!
//! Every function takes an [`ExperimentConfig`], writes its data files under
//! `config.out` and returns a summary. Data files depend only on the config
//! and seed; solver wall times go to a separate `timing.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::activations::{theta_params, Activation, ThetaParams};
use crate::combinatorics::{enumerate_admissible, moment_formula, monte_carlo_moments, GraphCensus};
use crate::config::ExperimentConfig;
use crate::distributions::EntryDistribution;
use crate::ensemble::{Model, ModelTag, Shape};
use crate::error::{Error, Result};
use crate::quadrature::DEFAULT_TOL;
use crate::spectra::{full_spectrum, ridge_loss_spectral, top_eigenvalues, Histogram, SpectrumResult};
use crate::theory::{
    bbp_prediction, classify_outliers, mp_density, mp_edges, outlier_from_d_transform, outlier_threshold,
    OutlierPrediction, PredictionReport,
};
use crate::trials::run_trials;

/// Tolerance for the Lanczos path of `spectrum` when `top_k > 0`.
pub const TOP_K_TOL: f64 = 1e-10;
/// Points on each MP overlay curve.
pub const OVERLAY_POINTS: usize = 400;
/// Figure dimensions are not fixed by the figures themselves; this is the default `n₁`.
pub const FIGURE_N1: usize = 2000;

fn sigma_product(w: &EntryDistribution, x: &EntryDistribution) -> f64 {
    (w.variance() * x.variance()).sqrt()
}

/// θ-parameters of the config's activation at `σ_w σ_x`.
pub fn config_thetas(cfg: &ExperimentConfig) -> Result<ThetaParams> {
    theta_params(&cfg.activation, sigma_product(&cfg.dist_w, &cfg.dist_x), DEFAULT_TOL)
}

/// The model selected by `cfg.model`; surrogates take θ and κ from the
/// config's activation and entry laws.
pub fn build_model(cfg: &ExperimentConfig) -> Result<Model> {
    match cfg.model.variant() {
        None if cfg.model == ModelTag::Nonlinear => {
            Model::nonlinear(cfg.dist_w.clone(), cfg.dist_x.clone(), &cfg.activation)
        }
        None => Err(Error::Parameter(format!("model {} cannot be sampled", cfg.model))),
        Some(variant) => Ok(Model::Surrogate {
            thetas: config_thetas(cfg)?,
            kappa_w: cfg.dist_w.kappa(),
            kappa_x: cfg.dist_x.kappa(),
            variant,
        }),
    }
}

/// Canonical config text without the `out` line, so that data files do not
/// depend on where they are written.
fn recorded_config(cfg: &ExperimentConfig) -> String {
    cfg.to_canonical().lines().filter(|l| !l.starts_with("out =")).map(|l| format!("{l}\n")).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

/// Per-trial checks: PSD up to `10⁻⁹‖M‖` and, for full spectra, the trace identity.
fn check_spectrum(s: &SpectrumResult, trace: Option<f64>, trial: usize) -> Result<()> {
    let max = s.eigenvalues.first().copied().unwrap_or(0.0).abs();
    if let Some(&min) = s.eigenvalues.last() {
        if min < -1e-9 * max.max(f64::MIN_POSITIVE) {
            return Err(Error::Invariant(format!("trial {trial}: negative eigenvalue {min} (max {max})")));
        }
    }
    if let Some(t) = trace {
        let sum: f64 = s.eigenvalues.iter().sum();
        if (sum - t).abs() > 1e-8 * t.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Invariant(format!("trial {trial}: eigenvalue sum {sum} differs from trace {t}")));
        }
    }
    Ok(())
}

fn check_histogram(h: &Histogram) -> Result<()> {
    let width = h.edges[1] - h.edges[0];
    let mass: f64 = h.density.iter().sum::<f64>() * width;
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Invariant(format!("histogram integrates to {mass}")));
    }
    Ok(())
}

/// Sample `cfg.trials` factors and compute their spectra (full, or top `k`).
pub fn sample_spectra(cfg: &ExperimentConfig, model: &Model, shape: Shape) -> Result<Vec<SpectrumResult>> {
    run_trials(cfg.seed, cfg.trials, |t, seed| {
        let factor = model.sample(shape, seed)?;
        if cfg.top_k == 0 {
            let s = full_spectrum(&factor)?;
            check_spectrum(&s, Some(factor.gram_trace()), t)?;
            Ok(s)
        } else {
            let s = top_eigenvalues(&factor, cfg.top_k, TOP_K_TOL)?;
            check_spectrum(&s, None, t)?;
            Ok(s)
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub config: String,
    pub model: ModelTag,
    pub shape: Shape,
    pub phi: f64,
    pub psi: f64,
    pub gamma: f64,
    pub eigenvalues_per_trial: usize,
    pub thetas: ThetaParams,
    pub trials: Vec<TrialSummary>,
    pub mean_lambda1: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    wall_time_seconds: Vec<f64>,
}

fn trial_summaries(spectra: &[SpectrumResult]) -> Vec<TrialSummary> {
    spectra
        .iter()
        .enumerate()
        .map(|(trial, s)| TrialSummary { trial, seed: s.seed, lambda1: s.largest(), converged: s.converged })
        .collect()
}

fn pooled(spectra: &[SpectrumResult]) -> Vec<f64> {
    spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect()
}

/// `spectrum`: eigenvalue CSV per trial, pooled histogram CSV, JSON metadata.
pub fn run_spectrum(cfg: &ExperimentConfig) -> Result<SpectrumReport> {
    let model = build_model(cfg)?;
    let spectra = sample_spectra(cfg, &model, cfg.shape)?;
    create_dir(&cfg.out)?;
    for (t, s) in spectra.iter().enumerate() {
        write_with(&cfg.out.join(format!("eigenvalues_trial{t}.csv")), |w| s.write_csv(w))?;
    }
    let hist = Histogram::new(&pooled(&spectra), cfg.bins, None)?;
    check_histogram(&hist)?;
    write_with(&cfg.out.join("histogram.csv"), |w| hist.write_csv(w))?;
    let trials = trial_summaries(&spectra);
    let report = SpectrumReport {
        config: recorded_config(cfg),
        model: cfg.model,
        shape: cfg.shape,
        phi: cfg.shape.phi(),
        psi: cfg.shape.psi(),
        gamma: cfg.shape.gamma(),
        eigenvalues_per_trial: spectra[0].eigenvalues.len(),
        thetas: config_thetas(cfg)?,
        mean_lambda1: trials.iter().map(|t| t.lambda1).sum::<f64>() / trials.len() as f64,
        trials,
    };
    write_json(&cfg.out.join("spectrum.json"), &report)?;
    write_json(&cfg.out.join("timing.json"), &Timing { wall_time_seconds: spectra.iter().map(|s| s.wall_time).collect() })?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpikePrediction {
    /// `w` for the weight-side spike, `x` for the data-side spike.
    pub side: &'static str,
    pub kappa: f64,
    pub alpha: f64,
    pub closed_form: Option<PredictionReport>,
    pub d_transform: Option<OutlierPrediction>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictReport {
    pub config: String,
    pub thetas: ThetaParams,
    pub kappa_w: f64,
    pub kappa_x: f64,
    /// Closed form with `κ = max(κ_w, κ_x)`; absent when `θ₂ ≠ 0`.
    pub headline: Option<PredictionReport>,
    pub spikes: Vec<SpikePrediction>,
    /// Trials of the linear-plain bulk used for the D-transform, if any.
    pub d_transform_trials: usize,
}

/// Eigenvalues of the linear-plain bulk pooled over `cfg.trials`.
pub fn simulated_bulk(cfg: &ExperimentConfig, thetas: &ThetaParams) -> Result<Vec<f64>> {
    let model = Model::Surrogate {
        thetas: *thetas,
        kappa_w: 0.0,
        kappa_x: 0.0,
        variant: crate::ensemble::SurrogateVariant::Plain,
    };
    let full = ExperimentConfig { top_k: 0, ..cfg.clone() };
    Ok(pooled(&sample_spectra(&full, &model, cfg.shape)?))
}

/// `predict`: closed-form report when `θ₂ = 0`; the D-transform route when
/// `θ₂ ≠ 0` or when `force_d_transform` is set.
pub fn run_predict(cfg: &ExperimentConfig, force_d_transform: bool) -> Result<PredictReport> {
    let thetas = config_thetas(cfg)?;
    let (phi, psi, gamma) = (cfg.shape.phi(), cfg.shape.psi(), cfg.shape.gamma());
    let (kw, kx) = (cfg.dist_w.kappa(), cfg.dist_x.kappa());
    let closed = |kappa: f64| match bbp_prediction(&thetas, kappa, phi, psi, cfg.convention) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Hypothesis(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let headline = closed(kw.max(kx))?;
    let use_d = force_d_transform || headline.is_none();
    let bulk = if use_d { Some(simulated_bulk(cfg, &thetas)?) } else { None };
    let mut spikes = Vec::new();
    for (side, kappa) in [("w", kw), ("x", kx)] {
        let alpha = thetas.theta3 * kappa / psi;
        let d_transform = match &bulk {
            Some(b) if alpha > 0.0 => Some(outlier_from_d_transform(b, alpha, gamma, true)?),
            Some(b) => Some(OutlierPrediction::Bulk { edge: b.iter().copied().fold(0.0, f64::max) }),
            None => None,
        };
        spikes.push(SpikePrediction { side, kappa, alpha, closed_form: closed(kappa)?, d_transform });
    }
    let report = PredictReport {
        config: recorded_config(cfg),
        thetas,
        kappa_w: kw,
        kappa_x: kx,
        headline,
        spikes,
        d_transform_trials: if use_d { cfg.trials } else { 0 },
    };
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("prediction.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub q: usize,
    pub formula: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
    /// `(monte_carlo − formula) / std_error`.
    pub z_score: f64,
}

/// `moments`: census CSV for `q ≤ q_max` and formula-vs-Monte-Carlo table.
pub fn run_moments(cfg: &ExperimentConfig) -> Result<Vec<MomentRow>> {
    let thetas = config_thetas(cfg)?;
    let censuses: Vec<GraphCensus> = (1..=cfg.q_max).map(enumerate_admissible).collect::<Result<_>>()?;
    let model = build_model(cfg)?;
    let mc = monte_carlo_moments(&model, cfg.shape, cfg.q_max, cfg.trials, cfg.seed)?;
    let (phi, psi) = (cfg.shape.phi(), cfg.shape.psi());
    let rows: Vec<MomentRow> = censuses
        .iter()
        .zip(&mc)
        .map(|(c, e)| {
            let formula = moment_formula(c.q, &thetas, phi, psi, c)?;
            Ok(MomentRow {
                q: c.q,
                formula,
                monte_carlo: e.mean,
                std_error: e.std_error,
                z_score: (e.mean - formula) / e.std_error,
            })
        })
        .collect::<Result<_>>()?;
    create_dir(&cfg.out)?;
    write_with(&cfg.out.join("census.csv"), |w| {
        writeln!(w, "q,Ii,Ij,b,count")?;
        for c in &censuses {
            for (&(ii, ij, b), &n) in &c.table {
                writeln!(w, "{},{ii},{ij},{b},{n}", c.q)?;
            }
        }
        Ok(())
    })?;
    write_with(&cfg.out.join("moments.csv"), |w| {
        writeln!(w, "q,formula,monte_carlo,std_error,z_score")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r.q, r.formula, r.monte_carlo, r.std_error, r.z_score)?;
        }
        Ok(())
    })?;
    Ok(rows)
}

/// Spectrum of `(1/m) YᵀY` from that of `M`: the same nonzero values, padded
/// with zeros (or truncated) to length `m`.
pub fn companion_from_gram(eigenvalues: &[f64], m: usize) -> Vec<f64> {
    let mut out: Vec<f64> = eigenvalues.iter().take(m).map(|&l| l.max(0.0)).collect();
    out.resize(m, 0.0);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    pub config: String,
    pub ridge: f64,
    pub per_trial: Vec<f64>,
    pub mean: f64,
}

/// `loss`: ridge training loss per trial, from full spectra.
pub fn run_loss(cfg: &ExperimentConfig) -> Result<LossReport> {
    let model = build_model(cfg)?;
    let full = ExperimentConfig { top_k: 0, ..cfg.clone() };
    let spectra = sample_spectra(&full, &model, cfg.shape)?;
    let per_trial = spectra
        .iter()
        .map(|s| ridge_loss_spectral(&companion_from_gram(&s.eigenvalues, cfg.shape.m), cfg.ridge))
        .collect::<Result<Vec<_>>>()?;
    let report = LossReport {
        config: recorded_config(cfg),
        ridge: cfg.ridge,
        mean: per_trial.iter().sum::<f64>() / per_trial.len() as f64,
        per_trial,
    };
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("loss.json"), &report)?;
    Ok(report)
}

/// The three reproducible figure experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    /// Same activation and data law, three weight laws of increasing κ.
    Nonuniv,
    /// The cosine family at three frequencies.
    Theta3,
    /// One model at three aspect ratios.
    Archi,
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonuniv" => Ok(Figure::Nonuniv),
            "theta3" => Ok(Figure::Theta3),
            "archi" => Ok(Figure::Archi),
            other => Err(Error::parse("figure", format!("expected nonuniv, theta3 or archi, got {other:?}"))),
        }
    }
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Nonuniv => "nonuniv",
            Figure::Theta3 => "theta3",
            Figure::Archi => "archi",
        }
    }
}

/// One subplot: laws, activation and ratios.
#[derive(Debug, Clone)]
pub struct Panel {
    pub name: String,
    pub dist_w: EntryDistribution,
    pub dist_x: EntryDistribution,
    pub activation: Activation,
    pub phi: f64,
    pub psi: f64,
}

/// Panel definitions, left to right.
pub fn figure_panels(figure: Figure) -> Result<Vec<Panel>> {
    let square = Activation::even_centered_monomial(1, true)?;
    let half_mix = EntryDistribution::rademacher_gaussian_mixture(0.5)?;
    let g = EntryDistribution::standard_gaussian;
    let panel = |name: &str, w: EntryDistribution, x: EntryDistribution, f: Activation, phi: f64, psi: f64| Panel {
        name: name.to_string(),
        dist_w: w,
        dist_x: x,
        activation: f,
        phi,
        psi,
    };
    Ok(match figure {
        Figure::Nonuniv => vec![
            panel("rademacher-w", EntryDistribution::rademacher(), EntryDistribution::rademacher(), square.clone(), 0.1, 1.0),
            panel(
                "mixture-w",
                EntryDistribution::rademacher_gaussian_mixture(0.25)?,
                EntryDistribution::rademacher(),
                square.clone(),
                0.1,
                1.0,
            ),
            panel("gaussian-w", g(), EntryDistribution::rademacher(), square, 0.1, 1.0),
        ],
        Figure::Theta3 => [2.0, 1.5, 0.8]
            .into_iter()
            .map(|a| Ok(panel(&format!("alpha-{a}"), g(), half_mix.clone(), Activation::cos_family(a)?, 0.1, 1.0)))
            .collect::<Result<_>>()?,
        Figure::Archi => [(0.7, 1.5), (0.3, 1.5), (0.07, 1.0)]
            .into_iter()
            .map(|(phi, psi)| panel(&format!("phi-{phi}-psi-{psi}"), g(), half_mix.clone(), square.clone(), phi, psi))
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PanelReport {
    pub figure: Figure,
    pub panel: String,
    pub dist_w: String,
    pub dist_x: String,
    pub activation: String,
    pub phi: f64,
    pub psi: f64,
    pub shape: Shape,
    /// Figure dimensions are a choice of this tool; recorded with every output.
    pub dimension_note: String,
    pub thetas: ThetaParams,
    pub bulk_edge_low: f64,
    pub bulk_edge_high: f64,
    pub outlier_threshold: f64,
    /// Closed-form predictions for the weight-side and data-side spikes.
    pub predictions: Vec<SpikePrediction>,
    pub predicted_outliers: usize,
    pub trials: Vec<TrialSummary>,
    pub outliers_per_trial: Vec<Vec<f64>>,
}

impl PanelReport {
    /// Most frequent detected outlier count across trials (ties: the smaller).
    pub fn modal_outlier_count(&self) -> usize {
        let mut counts = std::collections::BTreeMap::new();
        for o in &self.outliers_per_trial {
            *counts.entry(o.len()).or_insert(0usize) += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        counts.into_iter().find(|&(_, c)| c == best).map_or(0, |(k, _)| k)
    }
}

/// `figure`: for each panel a histogram CSV, an MP overlay CSV and an outlier JSON.
///
/// Only `n1`, `trials`, `seed`, `out`, `bins`, `convention` and
/// `outlier_buffer` are taken from `cfg`; the panels fix everything else.
pub fn run_figure(figure: Figure, cfg: &ExperimentConfig) -> Result<Vec<PanelReport>> {
    let dir: PathBuf = cfg.out.join(figure.name());
    create_dir(&dir)?;
    let mut reports = Vec::new();
    let mut timing = Vec::new();
    for p in figure_panels(figure)? {
        let shape = Shape::from_ratios(cfg.shape.n1, p.phi, p.psi)?;
        let pc = ExperimentConfig {
            shape,
            dist_w: p.dist_w.clone(),
            dist_x: p.dist_x.clone(),
            activation: p.activation.clone(),
            model: ModelTag::Nonlinear,
            top_k: 0,
            ..cfg.clone()
        };
        let thetas = config_thetas(&pc)?;
        let model = build_model(&pc)?;
        let spectra = sample_spectra(&pc, &model, shape)?;
        timing.extend(spectra.iter().map(|s| s.wall_time));
        let (low, high) = mp_edges(shape.gamma(), thetas.theta1)?;

        let values = pooled(&spectra);
        let hist = Histogram::new(&values, cfg.bins, None)?;
        check_histogram(&hist)?;
        write_with(&dir.join(format!("{}_histogram.csv", p.name)), |w| hist.write_csv(w))?;
        write_with(&dir.join(format!("{}_mp.csv", p.name)), |w| {
            writeln!(w, "x,density")?;
            for k in 0..=OVERLAY_POINTS {
                let x = low + (high - low) * k as f64 / OVERLAY_POINTS as f64;
                writeln!(w, "{x},{}", mp_density(x, shape.gamma(), thetas.theta1)?)?;
            }
            Ok(())
        })?;

        let mut predictions = Vec::new();
        for (side, kappa) in [("w", p.dist_w.kappa()), ("x", p.dist_x.kappa())] {
            let closed_form = match bbp_prediction(&thetas, kappa, shape.phi(), shape.psi(), cfg.convention) {
                Ok(r) => Some(r),
                Err(Error::Hypothesis(_)) => None,
                Err(e) => return Err(e),
            };
            predictions.push(SpikePrediction {
                side,
                kappa,
                alpha: thetas.theta3 * kappa / shape.psi(),
                closed_form,
                d_transform: None,
            });
        }
        let predicted_outliers =
            predictions.iter().filter(|s| s.closed_form.as_ref().is_some_and(|r| r.supercritical)).count();
        let outliers_per_trial: Vec<Vec<f64>> =
            spectra.iter().map(|s| classify_outliers(s, high, cfg.outlier_buffer)).collect();
        let report = PanelReport {
            figure,
            panel: p.name.clone(),
            dist_w: p.dist_w.to_string(),
            dist_x: p.dist_x.to_string(),
            activation: p.activation.to_string(),
            phi: p.phi,
            psi: p.psi,
            shape,
            dimension_note: format!("n1 = {} chosen by this tool (default {FIGURE_N1}); n0 and m follow from phi and psi", shape.n1),
            thetas,
            bulk_edge_low: low,
            bulk_edge_high: high,
            outlier_threshold: outlier_threshold(high, shape.n1, cfg.outlier_buffer),
            predictions,
            predicted_outliers,
            trials: trial_summaries(&spectra),
            outliers_per_trial,
        };
        write_json(&dir.join(format!("{}_outliers.json", p.name)), &report)?;
        reports.push(report);
    }
    write_json(&dir.join("timing.json"), &Timing { wall_time_seconds: timing })?;
    Ok(reports)
}
