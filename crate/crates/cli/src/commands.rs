use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use metricfit::datagen::generate;
use metricfit::evaluation::{
    accuracy, eval_report, log_cover_size, recovery_bound, sample_complexity, Channel, ComplexityArgs, EvalReport,
};
use metricfit::io::{read_dataset, read_tabular, write_dataset, ModelDocument, ModelMetadata, TabularSpec};
use metricfit::normalize::normalize;
use metricfit::{
    factor_to_metric, fit_factor, relative_errors, truncate_metric, Dataset64, FactorModel64, FitResult64,
    Hypothesis, MetricModel64, NoiseKind, NoiseSpec, Normalization, RiskContext, SolverConfig,
};
use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError, Result};

pub fn read_data(path: &Path, tabular: Option<&TabularSpec>) -> Result<Dataset64> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let data = match tabular {
        Some(spec) => read_tabular(reader, spec),
        None => read_dataset(reader),
    };
    data.map_err(|e| {
        let msg = match e {
            metricfit::Error::Format(m) => m,
            other => other.to_string(),
        };
        metricfit::Error::Format(format!("{}: {msg}", path.display())).into()
    })
}

fn read_model(path: &Path) -> Result<ModelDocument> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    serde_json::from_reader(reader)
        .map_err(|e| CliError::Core(metricfit::Error::Format(format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(metricfit::Error::from)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn write_data(path: &Path, data: &Dataset64) -> Result<()> {
    Ok(write_dataset(data, create(path)?)?)
}

/// Report fields that depend only on the inputs; wall time goes to stderr.
pub fn report_value(report: &EvalReport) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v.as_object_mut().expect("report is an object").remove("wall_time");
    v
}

/// Fits on `train`, optionally after normalization. The returned factor is
/// expressed in the original units.
pub fn fit_pipeline(
    train: &Dataset64,
    noise: &NoiseSpec<f64>,
    solver: &SolverConfig,
    mode: Normalization,
) -> Result<FitResult64> {
    if mode == Normalization::None {
        return Ok(fit_factor(train, noise, solver)?);
    }
    let (scaled, u) = normalize(train, mode)?;
    let mut fit = fit_factor(&scaled, noise, solver)?;
    // M = UᵀM′U, so A = UᵀA′.
    fit.model = FactorModel64::new(u.transpose() * fit.model.factor(), fit.model.tau())?;
    Ok(fit)
}

pub fn gen(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let out = cfg.prepare_output()?;
    let g = generate::<f64>(&cfg.spec)?;
    write_data(&out.join("train.csv"), &g.train)?;
    write_data(&out.join("test.csv"), &g.test)?;
    let mut truth = ModelDocument::new(
        &g.star,
        None,
        ModelMetadata {
            seed: Some(cfg.spec.seed),
            noise_kind: match cfg.spec.regime {
                metricfit::datagen::Regime::NormNoise { noise, .. } => Some(noise),
                metricfit::datagen::Regime::LabelFlip { .. } => None,
            },
            ..Default::default()
        },
    );
    truth.noise_scale = g.info.noise_scale;
    truth.write(&out.join("truth.json"))?;
    write_json(&out.join("gen.json"), &g.info)?;
    eprintln!(
        "wrote {} train / {} test pairs to {}; realized mislabel {:.4}, noise scale {}",
        g.train.len(),
        g.test.len(),
        out.display(),
        g.info.realized_mislabel,
        g.info.noise_scale.map_or("n/a".into(), |s| format!("{s:.6}"))
    );
    Ok(())
}

#[derive(Debug, Default, Clone)]
pub struct FitInputs {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitSummary {
    #[serde(flatten)]
    report: Value,
    noise_kind: NoiseKind,
    noise_scale: f64,
    normalize: Normalization,
    restarts: usize,
    final_grad_norm: f64,
}

pub fn fit(cfg: &ExperimentConfig, inputs: &FitInputs) -> Result<()> {
    cfg.validate()?;
    let data = cfg.data.as_ref();
    let tabular = data.and_then(|d| d.tabular.as_ref());
    let train_path = inputs
        .train
        .clone()
        .or_else(|| data.map(|d| d.train.clone()))
        .ok_or_else(|| CliError::Config("no training data: pass --train or set [data] train".into()))?;
    let test_path = inputs.test.clone().or_else(|| data.and_then(|d| d.test.clone()));
    let truth_path = inputs.truth.clone().or_else(|| data.and_then(|d| d.truth.clone()));

    let train = read_data(&train_path, tabular)?;
    let test = match &test_path {
        Some(p) => read_data(p, tabular)?,
        None => Dataset64::empty(train.dim()),
    };
    let truth = truth_path.as_deref().map(read_model).transpose()?;
    let star = truth.as_ref().map(|t| t.metric::<f64>()).transpose()?;
    let out = cfg.prepare_output()?;
    let noise = cfg.model_noise.spec()?;

    let start = Instant::now();
    let fit = fit_pipeline(&train, &noise, &cfg.solver, cfg.normalize)?;
    let hat = factor_to_metric(&fit.model);
    let mut doc = ModelDocument::new(
        &hat,
        Some(&fit.model),
        ModelMetadata {
            seed: Some(cfg.solver.seed),
            noise_kind: Some(noise.kind()),
            ..Default::default()
        },
    );
    doc.noise_scale = Some(noise.scale());
    doc.write(&out.join("model.json"))?;

    let mut w = create(&out.join("loss_history.csv"))?;
    let history = (|| -> std::io::Result<()> {
        writeln!(w, "iteration,loss")?;
        for (i, l) in &fit.loss_history {
            writeln!(w, "{i},{l}")?;
        }
        w.flush()
    })();
    history.map_err(io_err(out.join("loss_history.csv")))?;

    let report = eval_report(&fit, &train, &test, star.as_ref())?;
    write_json(
        &out.join("fit_report.json"),
        &FitSummary {
            report: report_value(&report),
            noise_kind: noise.kind(),
            noise_scale: noise.scale(),
            normalize: cfg.normalize,
            restarts: fit.restarts,
            final_grad_norm: fit.final_grad_norm,
        },
    )?;
    let pct = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{:.2}%", 100.0 * x));
    eprintln!(
        "fit {} pairs in {:.1}s ({} iterations, loss {:.6}); train {} / {} clean, test {} / {} clean",
        train.len(),
        start.elapsed().as_secs_f64(),
        fit.iterations_run,
        fit.final_loss,
        pct(Some(report.train_acc_noisy)),
        pct(report.train_acc_clean),
        pct(report.test_acc_noisy),
        pct(report.test_acc_clean),
    );
    if let (Some(s), Some(f)) = (report.rel_spectral, report.rel_frobenius) {
        eprintln!("relative error of M/tau: spectral {s:.4}, frobenius {f:.4}");
    }
    Ok(())
}

/// Factor for a stored model: the saved one if present, else the full-rank
/// factor of the metric.
fn factor_of(doc: &ModelDocument) -> Result<FactorModel64> {
    match doc.factor_model::<f64>()? {
        Some(f) => Ok(f),
        None => Ok(doc.metric::<f64>()?.to_factor(doc.dim)?),
    }
}

pub struct EvalInputs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub train: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

pub fn eval(cfg: &ExperimentConfig, inputs: &EvalInputs) -> Result<()> {
    let tabular = cfg.data.as_ref().and_then(|d| d.tabular.as_ref());
    let doc = read_model(&inputs.model)?;
    let model = factor_of(&doc)?;
    let test = read_data(&inputs.data, tabular)?;
    let train = match &inputs.train {
        Some(p) => read_data(p, tabular)?,
        None => test.clone(),
    };
    let star = inputs.truth.as_deref().map(read_model).transpose()?.map(|d| d.metric::<f64>()).transpose()?;
    let noise = cfg.model_noise.spec()?;
    let loss = RiskContext::new(&train, noise)?.empirical_risk(&model)?;
    let fit = FitResult64 {
        model,
        loss_history: Vec::new(),
        iterations_run: 0,
        seed: doc.metadata.seed.unwrap_or(0),
        wall_time: 0.0,
        final_loss: loss,
        final_grad_norm: f64::NAN,
        restarts: 0,
    };
    let report = report_value(&eval_report(&fit, &train, &test, star.as_ref())?);
    let out = cfg.prepare_output()?;
    write_json(&out.join("eval.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

pub struct TruncateInputs {
    pub model: PathBuf,
    pub k: usize,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Serialize)]
struct Side {
    acc_noisy: Option<f64>,
    acc_clean: Option<f64>,
    rel_spectral: Option<f64>,
    rel_frobenius: Option<f64>,
}

#[derive(Serialize)]
struct TruncateReport {
    k: usize,
    dim: usize,
    /// Largest eigenvalue removed.
    gamma: f64,
    before: Side,
    after: Side,
}

fn side(m: &MetricModel64, data: Option<&Dataset64>, star: Option<&MetricModel64>) -> Result<Side> {
    let acc = |c| -> Result<Option<f64>> {
        match data {
            Some(d) if !d.is_empty() && (c == Channel::Noisy || d.clean_labels().is_some()) => {
                Ok(Some(accuracy(m, d, c)?))
            }
            _ => Ok(None),
        }
    };
    let rel = star.map(|s| relative_errors(m, s)).transpose()?;
    Ok(Side {
        acc_noisy: acc(Channel::Noisy)?,
        acc_clean: acc(Channel::Clean)?,
        rel_spectral: rel.map(|r| r.0),
        rel_frobenius: rel.map(|r| r.1),
    })
}

pub fn truncate(cfg: &ExperimentConfig, inputs: &TruncateInputs) -> Result<()> {
    let tabular = cfg.data.as_ref().and_then(|d| d.tabular.as_ref());
    let doc = read_model(&inputs.model)?;
    let m = doc.metric::<f64>()?;
    let (mk, gamma) = truncate_metric(&m, inputs.k)?;
    let data = inputs.data.as_deref().map(|p| read_data(p, tabular)).transpose()?;
    let star = inputs.truth.as_deref().map(read_model).transpose()?.map(|d| d.metric::<f64>()).transpose()?;
    let report = TruncateReport {
        k: inputs.k,
        dim: m.dim(),
        gamma,
        before: side(&m, data.as_ref(), star.as_ref())?,
        after: side(&mk, data.as_ref(), star.as_ref())?,
    };
    let out = cfg.prepare_output()?;
    let mut truncated = ModelDocument::new(&mk, Some(&mk.to_factor(inputs.k)?), doc.metadata.clone());
    truncated.noise_scale = doc.noise_scale;
    truncated.write(&out.join(format!("model_k{}.json", inputs.k)))?;
    write_json(&out.join(format!("truncate_k{}.json", inputs.k)), &report)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ComplexityInputs {
    pub eps: f64,
    pub delta: f64,
    pub dim: usize,
    pub big_f: f64,
    pub big_b: f64,
    pub beta: f64,
    pub noise: NoiseKind,
    pub noise_scale: f64,
    pub zeta: Option<f64>,
    pub big_t: Option<f64>,
    pub omega: Option<f64>,
    pub alpha: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Serialize)]
struct ComplexityReport {
    eps: f64,
    delta: f64,
    dim: usize,
    big_f: f64,
    big_b: f64,
    beta: f64,
    zeta: f64,
    big_t: f64,
    omega: f64,
    sample_complexity: f64,
    sample_complexity_ceil: f64,
    meta_assumption_violated: bool,
    alpha: f64,
    log_cover_size: f64,
    ln_recovery_gap: Option<f64>,
    recovery_gap: Option<f64>,
}

pub fn complexity(out: Option<&Path>, a: &ComplexityInputs) -> Result<()> {
    let constants = NoiseSpec::new(a.noise, a.noise_scale)?.constants(a.beta * a.big_f)?;
    let zeta = a.zeta.unwrap_or(constants.zeta);
    let big_t = a.big_t.unwrap_or(constants.big_t);
    let omega = a.omega.unwrap_or(constants.omega);
    let n = sample_complexity(&ComplexityArgs {
        eps: a.eps,
        delta: a.delta,
        d: a.dim,
        zeta,
        big_f: a.big_f,
        big_b: a.big_b,
        beta: a.beta,
        big_t,
    })?;
    if n.meta_assumption_violated {
        eprintln!("warning: B > beta*F violates the meta assumption");
    }
    let alpha = a.alpha.unwrap_or(a.eps);
    let recovery = a.c.map(|c| recovery_bound(a.eps, a.dim, c, omega)).transpose()?;
    let report = ComplexityReport {
        eps: a.eps,
        delta: a.delta,
        dim: a.dim,
        big_f: a.big_f,
        big_b: a.big_b,
        beta: a.beta,
        zeta,
        big_t,
        omega,
        sample_complexity: n.value,
        sample_complexity_ceil: n.value.ceil(),
        meta_assumption_violated: n.meta_assumption_violated,
        alpha,
        log_cover_size: log_cover_size(alpha, a.dim, a.big_b, a.beta)?,
        ln_recovery_gap: recovery.map(|r| r.ln_value),
        recovery_gap: recovery.and_then(|r| r.value),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(&dir.join("complexity.json"), &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}
