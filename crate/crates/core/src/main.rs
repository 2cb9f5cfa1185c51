use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cklab::activations::{theta_params, Activation};
use cklab::config::ExperimentConfig;
use cklab::experiments::{self, Figure};
use cklab::quadrature::DEFAULT_TOL;
use cklab::theory::Convention;
use cklab::trials::configure_threads;
use cklab::{Error, Result};

/// Spectra of random-network conjugate kernels: simulation, predictions and figures.
#[derive(Parser)]
#[command(name = "cklab", version)]
struct Cli {
    /// Worker threads (otherwise `CKLAB_THREADS`, otherwise all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["paper", "covariant"])]
    convention: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print θ₁, θ₂, θ₃ of an activation.
    Theta {
        #[command(flatten)]
        common: Common,
        /// Activation spec, e.g. `cos(alpha=1)`; overrides the config.
        #[arg(long)]
        activation: Option<String>,
        /// σ_w σ_x; defaults to the config's entry laws.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Sample spectra; writes eigenvalue CSVs, a histogram and JSON metadata.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Largest-eigenvalue prediction report.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Also invert the D-transform of a simulated bulk when θ₂ = 0.
        #[arg(long)]
        d_transform: bool,
    },
    /// Admissible-graph census and moment formula against Monte Carlo.
    Moments {
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce one of the three figure experiments.
    Figure {
        #[arg(value_parser = ["nonuniv", "theta3", "archi"])]
        which: String,
        #[command(flatten)]
        common: Common,
    },
    /// Expected ridge training loss.
    Loss {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ridge: Option<f64>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        if t == 0 {
            return Err(Error::Parameter("--trials must be >= 1".into()));
        }
        cfg.trials = t;
    }
    let s = cfg.shape;
    cfg.shape = cklab::ensemble::Shape::new(
        common.n0.unwrap_or(s.n0),
        common.n1.unwrap_or(s.n1),
        common.m.unwrap_or(s.m),
    )?;
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(c) = &common.convention {
        cfg.convention = c.parse::<Convention>()?;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads);
    match cli.command {
        Command::Theta { common, activation, sigma } => {
            let cfg = load(&common)?;
            let f: Activation = match activation {
                Some(spec) => spec.parse()?,
                None => cfg.activation.clone(),
            };
            let sigma = sigma.unwrap_or_else(|| (cfg.dist_w.variance() * cfg.dist_x.variance()).sqrt());
            let t = theta_params(&f, sigma, DEFAULT_TOL)?;
            print_json(&serde_json::json!({
                "activation": f.to_string(),
                "theta1": t.theta1,
                "theta2": t.theta2,
                "theta3": t.theta3,
                "sigma_product": t.sigma_product,
                "stein_bounds_hold": t.satisfies_stein_bounds(1e-10),
            }))
        }
        Command::Spectrum { common } => {
            let cfg = load(&common)?;
            let r = experiments::run_spectrum(&cfg)?;
            println!(
                "{} trials of {} at n0={} n1={} m={}: mean lambda1 = {}; files in {}",
                r.trials.len(),
                r.model,
                r.shape.n0,
                r.shape.n1,
                r.shape.m,
                r.mean_lambda1,
                cfg.out.display()
            );
            Ok(())
        }
        Command::Predict { common, d_transform } => {
            let cfg = load(&common)?;
            let r = experiments::run_predict(&cfg, d_transform)?;
            print_json(&r)
        }
        Command::Moments { common } => {
            let cfg = load(&common)?;
            let rows = experiments::run_moments(&cfg)?;
            println!("q  formula  monte_carlo  std_error  z");
            for r in rows {
                println!("{}  {:.6}  {:.6}  {:.6}  {:+.2}", r.q, r.formula, r.monte_carlo, r.std_error, r.z_score);
            }
            Ok(())
        }
        Command::Figure { which, common } => {
            if common.n0.is_some() || common.m.is_some() {
                return Err(Error::Parameter("figure panels fix their aspect ratios; set the size with --n1".into()));
            }
            let cfg = load(&common)?;
            let figure: Figure = which.parse()?;
            for p in experiments::run_figure(figure, &cfg)? {
                println!(
                    "{}/{}: predicted outliers {}, detected (modal over {} trials) {}, mean lambda1 {:.4}, edge {:.4}",
                    figure.name(),
                    p.panel,
                    p.predicted_outliers,
                    p.trials.len(),
                    p.modal_outlier_count(),
                    p.trials.iter().map(|t| t.lambda1).sum::<f64>() / p.trials.len() as f64,
                    p.bulk_edge_high,
                );
            }
            Ok(())
        }
        Command::Loss { common, ridge } => {
            let mut cfg = load(&common)?;
            if let Some(r) = ridge {
                cfg.ridge = r;
            }
            let r = experiments::run_loss(&cfg)?;
            println!("ridge {} -> expected training loss {}", r.ridge, r.mean);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
