mod commands;
mod config;
mod error;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metricfit::{NoiseKind, Normalization};

use crate::commands::{ComplexityInputs, EvalInputs, FitInputs, TruncateInputs};
use crate::config::ExperimentConfig;
use crate::error::Result;

/// Mahalanobis metric learning from noisy Close/Far pair labels.
#[derive(Parser)]
#[command(name = "metricfit", version)]
struct Cli {
    /// TOML experiment config; omitted keys take the canonical defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generation and solver initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `experiment` (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Preprocessing applied before fitting: none, standardize or whiten.
    #[arg(long, global = true)]
    normalize: Option<Normalization>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test pair files, the true model and a sidecar.
    Gen,
    /// Fit a model to a pair dataset.
    Fit(FitArgs),
    /// Evaluate a stored model on a dataset.
    Eval(EvalArgs),
    /// Keep the top-k eigenvalues of a stored model.
    Truncate(TruncateArgs),
    /// Sample-complexity, cover-size and recovery-bound calculators.
    Complexity(ComplexityArgs),
    /// Run the configured grid of synthetic experiments.
    Experiment,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Ground-truth model document.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Noise model of the loss.
    #[arg(long)]
    noise: Option<NoiseKind>,
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Columns of the factor.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset the test metrics refer to.
    #[arg(long)]
    data: PathBuf,
    /// Training set for the train metrics and loss; defaults to `--data`.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct TruncateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    dim: usize,
    /// Bound on squared pair norms.
    #[arg(long, default_value_t = 1.0)]
    big_f: f64,
    /// Bound on the threshold.
    #[arg(long, default_value_t = 1.0)]
    big_b: f64,
    /// Bound on the metric's spectral norm.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Noise family supplying ζ, T and ω when not given explicitly.
    #[arg(long, default_value = "logistic")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    big_t: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Cover radius; defaults to `eps`.
    #[arg(long)]
    alpha: Option<f64>,
    /// Density floor on the unit ball; enables the recovery bound.
    #[arg(long)]
    c: Option<f64>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.spec.seed = seed;
        cfg.solver.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(n) = cli.normalize {
        cfg.normalize = n;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::Fit(a) => {
            if let Some(k) = a.noise {
                cfg.model_noise.kind = k;
            }
            if let Some(s) = a.noise_scale {
                cfg.model_noise.scale = s;
            }
            if a.rank.is_some() {
                cfg.solver.rank_bound = a.rank;
            }
            if let Some(n) = a.max_iters {
                cfg.solver.max_iters = n;
            }
            commands::fit(
                &cfg,
                &FitInputs {
                    train: a.train,
                    test: a.test,
                    truth: a.truth,
                },
            )
        }
        Command::Eval(a) => commands::eval(
            &cfg,
            &EvalInputs {
                model: a.model,
                data: a.data,
                train: a.train,
                truth: a.truth,
            },
        ),
        Command::Truncate(a) => commands::truncate(
            &cfg,
            &TruncateInputs {
                model: a.model,
                k: a.k,
                data: a.data,
                truth: a.truth,
            },
        ),
        Command::Complexity(a) => commands::complexity(
            cli.out.as_deref(),
            &ComplexityInputs {
                eps: a.eps,
                delta: a.delta,
                dim: a.dim,
                big_f: a.big_f,
                big_b: a.big_b,
                beta: a.beta,
                noise: a.noise,
                noise_scale: a.noise_scale,
                zeta: a.zeta,
                big_t: a.big_t,
                omega: a.omega,
                alpha: a.alpha,
                c: a.c,
            },
        ),
        Command::Experiment => experiment::experiment(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
