//! Fits the canonical synthetic configuration once and prints a report.

use metricfit::datagen::{generate, SyntheticSpec};
use metricfit::evaluation::eval_report;
use metricfit::{fit_factor, RiskContext, SolverConfig};

fn main() -> metricfit::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = SyntheticSpec { seed, ..SyntheticSpec::canonical() };
    let g = generate::<f64>(&spec)?;
    let noise = g.generating_noise()?;
    let ctx = RiskContext::new(&g.train, noise)?;
    println!("noise scale {:?}, realized mislabel {:.4}", g.info.noise_scale, g.info.realized_mislabel);
    println!("loss at truth {:.4}", ctx.empirical_risk(&g.star)?);
    let cfg = SolverConfig { seed, ..SolverConfig::default() };
    let fit = fit_factor(&g.train, &metricfit::NoiseSpec::standard(noise.kind()), &cfg)?;
    for &(i, l) in fit.loss_history.iter().filter(|(i, _)| [0, 100, 500, 1000, 2000, 5000, 10000, 20000, 30000].contains(i)) {
        println!("iter {i:>6} loss {l:.8}");
    }
    let report = eval_report(&fit, &g.train, &g.test, Some(&g.star))?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}
