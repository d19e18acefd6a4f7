//! Repetitions × grid cells, run in parallel and written in a fixed order.

use std::path::Path;

use metricfit::datagen::{generate, Regime, SyntheticSpec};
use metricfit::evaluation::{accuracy, eval_report, Channel};
use metricfit::{factor_to_metric, relative_errors, truncate_metric, NoiseKind};
use rayon::prelude::*;

use crate::commands::fit_pipeline;
use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridNoise {
    Kind(NoiseKind),
    LabelFlip,
}

impl GridNoise {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "label_flip" | "flip" | "noisy_labeling" => Ok(Self::LabelFlip),
            other => other
                .parse()
                .map(Self::Kind)
                .map_err(|_| CliError::Config(format!("unknown grid noise `{s}`"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Kind(k) => k.name(),
            Self::LabelFlip => "label_flip",
        }
    }

    fn regime(self, target: f64) -> Regime {
        match self {
            Self::Kind(noise) => Regime::NormNoise { noise, target },
            Self::LabelFlip => Regime::LabelFlip { p: 2.0 * target },
        }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    index: usize,
    noise: GridNoise,
    target: f64,
    n_train: usize,
}

fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let (base_noise, base_target) = match cfg.spec.regime {
        Regime::NormNoise { noise, target } => (GridNoise::Kind(noise), target),
        Regime::LabelFlip { p } => (GridNoise::LabelFlip, p / 2.0),
    };
    let noises = if cfg.grid.noises.is_empty() {
        vec![base_noise]
    } else {
        cfg.grid.noises.iter().map(|s| GridNoise::parse(s)).collect::<Result<_>>()?
    };
    let targets = if cfg.grid.targets.is_empty() {
        vec![base_target]
    } else {
        cfg.grid.targets.clone()
    };
    let sizes = if cfg.grid.n_train.is_empty() {
        vec![cfg.spec.n_train]
    } else {
        cfg.grid.n_train.clone()
    };
    let mut out = Vec::new();
    for &noise in &noises {
        for &target in &targets {
            for &n_train in &sizes {
                out.push(Cell {
                    index: out.len(),
                    noise,
                    target,
                    n_train,
                });
            }
        }
    }
    Ok(out)
}

const METRICS: [&str; 16] = [
    "noise_scale",
    "realized_mislabel",
    "train_acc_noisy",
    "train_acc_clean",
    "test_acc_noisy",
    "test_acc_clean",
    "rel_spectral",
    "rel_frobenius",
    "loss_final",
    "iterations",
    "restarts",
    "trunc_k",
    "trunc_gamma",
    "trunc_test_acc_clean",
    "trunc_rel_spectral",
    "trunc_rel_frobenius",
];

struct Row {
    cell: Cell,
    rep: usize,
    seed: u64,
    outcome: std::result::Result<[Option<f64>; 16], (&'static str, String)>,
}

fn error_tag(e: &CliError) -> &'static str {
    match e.exit_code() {
        2 => "config",
        3 => "io",
        4 => "diverged",
        5 => "infeasible",
        _ => "numeric",
    }
}

fn run_one(cfg: &ExperimentConfig, cell: &Cell, rep: usize) -> Result<[Option<f64>; 16]> {
    let test_size = cfg.spec.n_pairs - cfg.spec.n_train;
    let spec = SyntheticSpec {
        n_train: cell.n_train,
        n_pairs: cell.n_train + test_size,
        regime: cell.noise.regime(cell.target),
        seed: cfg.spec.seed + rep as u64,
        ..cfg.spec.clone()
    };
    let g = generate::<f64>(&spec)?;
    let solver = metricfit::SolverConfig {
        seed: cfg.solver.seed + rep as u64,
        ..cfg.solver.clone()
    };
    let fit = fit_pipeline(&g.train, &cfg.model_noise.spec()?, &solver, cfg.normalize)?;
    let r = eval_report(&fit, &g.train, &g.test, Some(&g.star))?;
    let mut trunc = [None; 5];
    if let Some(k) = cfg.truncate_to {
        let (mk, gamma) = truncate_metric(&factor_to_metric(&fit.model), k)?;
        let acc = if g.test.is_empty() {
            None
        } else {
            Some(accuracy(&mk, &g.test, Channel::Clean)?)
        };
        let rel = relative_errors(&mk, &g.star).ok();
        trunc = [Some(k as f64), Some(gamma), acc, rel.map(|x| x.0), rel.map(|x| x.1)];
    }
    Ok([
        g.info.noise_scale,
        Some(g.info.realized_mislabel_train),
        Some(r.train_acc_noisy),
        r.train_acc_clean,
        r.test_acc_noisy,
        r.test_acc_clean,
        r.rel_spectral,
        r.rel_frobenius,
        Some(r.loss_final),
        Some(r.iterations as f64),
        Some(fit.restarts as f64),
        trunc[0],
        trunc[1],
        trunc[2],
        trunc[3],
        trunc[4],
    ])
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let wrap = |e: csv::Error| CliError::Core(e.into());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn experiment(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.spec.n_pairs < cfg.spec.n_train {
        return Err(CliError::Config("n_pairs must be at least n_train".into()));
    }
    let out = cfg.prepare_output()?;
    let cells = cells(cfg)?;
    let jobs: Vec<(Cell, usize)> = cells
        .iter()
        .flat_map(|c| (0..cfg.repetitions).map(move |rep| (c.clone(), rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut rows: Vec<Row> = pool.install(|| {
        jobs.par_iter()
            .map(|(cell, rep)| {
                let outcome = run_one(cfg, cell, *rep).map_err(|e| (error_tag(&e), e.to_string()));
                match &outcome {
                    Ok(m) => eprintln!(
                        "[cell {} {} {:.2} n={} rep {rep}] test clean {}",
                        cell.index,
                        cell.noise.name(),
                        cell.target,
                        cell.n_train,
                        fmt(m[5])
                    ),
                    Err((tag, msg)) => eprintln!("[cell {} rep {rep}] failed ({tag}): {msg}", cell.index),
                }
                Row {
                    cell: cell.clone(),
                    rep: *rep,
                    seed: cfg.spec.seed + *rep as u64,
                    outcome,
                }
            })
            .collect()
    });
    rows.sort_by_key(|r| (r.cell.index, r.rep));

    let mut header: Vec<String> = ["cell", "noise", "target", "n_train", "rep", "seed", "status", "error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(METRICS.iter().map(|s| s.to_string()));
    let run_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.cell.index.to_string(),
                r.cell.noise.name().to_string(),
                format!("{}", r.cell.target),
                r.cell.n_train.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
            ];
            match &r.outcome {
                Ok(m) => {
                    v.push("ok".into());
                    v.push(String::new());
                    v.extend(m.iter().map(|x| fmt(*x)));
                }
                Err((tag, msg)) => {
                    v.push(format!("error:{tag}"));
                    v.push(msg.clone());
                    v.extend(std::iter::repeat_n(String::new(), METRICS.len()));
                }
            }
            v
        })
        .collect();
    write_csv(&out.join("runs.csv"), &header, &run_rows)?;

    let mut summary_header: Vec<String> =
        ["cell", "noise", "target", "n_train", "ok", "failed"].iter().map(|s| s.to_string()).collect();
    summary_header.extend(METRICS.iter().map(|m| format!("mean_{m}")));
    let summary: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let mine: Vec<&Row> = rows.iter().filter(|r| r.cell.index == c.index).collect();
            let ok: Vec<&[Option<f64>; 16]> = mine.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let mut v = vec![
                c.index.to_string(),
                c.noise.name().to_string(),
                format!("{}", c.target),
                c.n_train.to_string(),
                ok.len().to_string(),
                (mine.len() - ok.len()).to_string(),
            ];
            for j in 0..METRICS.len() {
                let vals: Vec<f64> = ok.iter().filter_map(|m| m[j]).collect();
                v.push(if vals.is_empty() {
                    String::new()
                } else {
                    format!("{}", vals.iter().sum::<f64>() / vals.len() as f64)
                });
            }
            v
        })
        .collect();
    write_csv(&out.join("summary.csv"), &summary_header, &summary)?;
    let resolved = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(out.join("config.resolved.toml"), resolved).map_err(io_err(out.join("config.resolved.toml")))?;

    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    eprintln!(
        "{} runs over {} cells ({failed} failed); tables in {}",
        rows.len(),
        cells.len(),
        out.display()
    );
    Ok(())
}
