mod common;

use common::{fixture, gaussian, num, random_psd, rel_err, rng, scalar_fixture};
use metricfit::evaluation::{
    accuracy, disagreement, eval_report, ln_ball_constant, log_cover_size, recovery_bound, sample_complexity,
    Channel, ComplexityArgs, EvalReport,
};
use metricfit::linalg::sym_eigendecomp;
use metricfit::{Dataset, Error, FactorModel, FitResult, Hypothesis, Label, MetricModel};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn args(eps: f64, delta: f64, d: usize) -> ComplexityArgs<f64> {
    ComplexityArgs {
        eps,
        delta,
        d,
        zeta: 1.0,
        big_f: 1.0,
        big_b: 1.0,
        beta: 1.0,
        big_t: 2.0,
    }
}

#[test]
fn sample_complexity_matches_fixture() {
    for row in fixture("formulas.json")["sample_complexity"].as_array().unwrap() {
        let a = ComplexityArgs {
            eps: num(&row["eps"]),
            delta: num(&row["delta"]),
            d: row["d"].as_u64().unwrap() as usize,
            zeta: num(&row["zeta"]),
            big_f: num(&row["big_f"]),
            big_b: num(&row["big_b"]),
            beta: num(&row["beta"]),
            big_t: num(&row["big_t"]),
        };
        let got = sample_complexity(&a).unwrap();
        assert!(rel_err(got.value, num(&row["value"])) < 1e-10, "{row}");
        assert!(!got.meta_assumption_violated);
    }
    let got = sample_complexity(&args(0.1, 0.05, 10)).unwrap().value;
    assert!(rel_err(got, scalar_fixture("sample_complexity_d10")) < 1e-12);
}

#[test]
fn sample_complexity_structure() {
    // Halving ε quadruples the leading factor; the logs grow slowly.
    let n1 = sample_complexity(&args(0.1, 0.05, 10)).unwrap().value;
    let n2 = sample_complexity(&args(0.05, 0.05, 10)).unwrap().value;
    let ratio = n2 / n1;
    assert!(ratio > 4.0 && ratio < 4.5, "{ratio}");
    let mut prev = 0.0;
    for d in 2..=50 {
        let v = sample_complexity(&args(0.1, 0.05, d)).unwrap().value;
        assert!(v > prev);
        prev = v;
    }
    let mut prev = f64::INFINITY;
    for i in 1..100 {
        let v = sample_complexity(&args(0.1, i as f64 / 100.0, 5)).unwrap().value;
        assert!(v < prev);
        prev = v;
    }
    let mut prev = f64::INFINITY;
    for i in 1..100 {
        let v = sample_complexity(&args(i as f64 / 100.0, 0.05, 5)).unwrap().value;
        assert!(v < prev);
        prev = v;
    }
}

#[test]
fn sample_complexity_errors_and_warning() {
    assert!(matches!(sample_complexity(&args(0.0, 0.05, 3)), Err(Error::Domain(_))));
    assert!(sample_complexity(&args(1.0, 0.05, 3)).is_err());
    assert!(sample_complexity(&args(0.1, 0.0, 3)).is_err());
    assert!(sample_complexity(&args(0.1, 0.05, 0)).is_err());
    assert!(sample_complexity(&ComplexityArgs { big_t: -1.0, ..args(0.1, 0.05, 3) }).is_err());
    let wide = ComplexityArgs { big_b: 5.0, ..args(0.1, 0.05, 3) };
    let out = sample_complexity(&wide).unwrap();
    assert!(out.meta_assumption_violated && out.value.is_finite());
}

#[test]
fn log_cover_matches_fixture() {
    for row in fixture("formulas.json")["log_cover_size"].as_array().unwrap() {
        let got = log_cover_size(
            num(&row["alpha"]),
            row["d"].as_u64().unwrap() as usize,
            num(&row["big_b"]),
            num(&row["beta"]),
        )
        .unwrap();
        assert!(rel_err(got, num(&row["value"])) < 1e-10, "{row}");
    }
    let got = log_cover_size(0.1, 10, 1.0, 1.0).unwrap();
    assert!(rel_err(got, scalar_fixture("log_cover_d10")) < 1e-12);
}

#[test]
fn log_cover_structure() {
    // 4βd√d/α = 1 removes the exponent term.
    let got = log_cover_size(4.0, 1, 1.0, 1.0).unwrap();
    assert!((got - (0.25f64).ln()).abs() < 1e-15);
    let mut prev = f64::NEG_INFINITY;
    for d in 1..200 {
        let v = log_cover_size(0.1, d, 1.0, 1.0).unwrap();
        assert!(v > prev);
        prev = v;
    }
    assert!(log_cover_size(0.0, 3, 1.0, 1.0).is_err());
    assert!(log_cover_size(-1.0, 3, 1.0, 1.0).is_err());
}

#[test]
fn huge_dimensions_stay_finite() {
    let v = sample_complexity(&args(0.1, 0.05, 10_000)).unwrap().value;
    assert!(v.is_finite() && v > 0.0);
    assert!(log_cover_size(0.1f64, 10_000, 1.0, 1.0).unwrap().is_finite());
    let r = recovery_bound(0.1f64, 10_000, 1.0, 0.2).unwrap();
    assert!(r.ln_value.is_finite());
    assert!(r.value.is_none());
}

#[test]
fn recovery_bound_matches_fixture() {
    for row in fixture("formulas.json")["recovery_bound"].as_array().unwrap() {
        let got = recovery_bound(
            num(&row["eps"]),
            row["d"].as_u64().unwrap() as usize,
            num(&row["c"]),
            num(&row["omega"]),
        )
        .unwrap();
        assert!(rel_err(got.ln_value, num(&row["ln_value"])) < 1e-10, "{row}");
    }
    let got = recovery_bound(0.1, 20, 1.0, 0.25).unwrap();
    assert!(rel_err(got.ln_value, scalar_fixture("recovery_ln_d20")) < 1e-12);
}

#[test]
fn recovery_bound_uniform_ball_in_one_dimension() {
    // The uniform density on [−1, 1] is 1/2, so C(1) = 1.
    assert!(ln_ball_constant(1, 0.5f64).abs() < 1e-15);
    let (eps, omega) = (0.3f64, 0.2f64);
    let got = recovery_bound(eps, 1, 0.5, omega).unwrap();
    let want = omega * omega / (800.0 * 324.0) * eps * eps;
    assert!(rel_err(got.value.unwrap(), want) < 1e-12);
}

#[test]
fn recovery_bound_decreases_in_dimension() {
    let mut prev = f64::INFINITY;
    for d in 1..300 {
        let v = recovery_bound(0.1, d, 1.0, 0.25).unwrap().ln_value;
        assert!(v < prev);
        prev = v;
    }
    assert!(recovery_bound(0.0, 3, 1.0, 0.1).is_err());
    assert!(recovery_bound(0.1, 3, 1.0, -0.1).is_err());
}

#[test]
fn weyl_perturbation_check() {
    let mut r = rng(1);
    for trial in 0..200 {
        let star = random_psd(6, &mut r);
        let e = random_psd(6, &mut r) - random_psd(6, &mut r);
        let norm = sym_eigendecomp(&e).unwrap().values.iter().fold(0f64, |m, v| m.max(v.abs()));
        let eps = 0.01 + 0.001 * trial as f64;
        let hat = &star + e * (eps / norm);
        let a = sym_eigendecomp(&hat).unwrap().values;
        let b = sym_eigendecomp(&star).unwrap().values;
        for i in 0..6 {
            assert!((a[i] - b[i]).abs() <= eps + 1e-9);
        }
    }
}

fn labeled(seed: u64) -> (Dataset<f64>, MetricModel<f64>) {
    let mut r = rng(seed);
    let star = MetricModel::new(random_psd(3, &mut r), 1.0).unwrap();
    let zs = gaussian(3, 500, &mut r);
    let clean = star.predict_all(&zs).unwrap();
    let noisy: Vec<Label> = clean
        .iter()
        .enumerate()
        .map(|(i, &l)| if i % 7 == 0 { l.flipped() } else { l })
        .collect();
    (Dataset::new(zs, noisy, Some(clean)).unwrap(), star)
}

#[test]
fn accuracy_examples() {
    let (ds, star) = labeled(2);
    assert_eq!(accuracy(&star, &ds, Channel::Clean).unwrap(), 1.0);
    let noisy = accuracy(&star, &ds, Channel::Noisy).unwrap();
    assert!((noisy - (1.0 - 72.0 / 500.0)).abs() < 1e-15);

    let balanced = Dataset::new(
        gaussian(2, 1000, &mut rng(3)),
        (0..1000).map(|i| if i % 2 == 0 { Label::Far } else { Label::Close }).collect(),
        None,
    )
    .unwrap();
    let always_far = MetricModel::new(DMatrix::zeros(2, 2), 0.0).unwrap();
    assert_eq!(accuracy(&always_far, &balanced, Channel::Noisy).unwrap(), 0.5);
    assert!(matches!(
        accuracy(&always_far, &balanced, Channel::Clean),
        Err(Error::MissingLabels(_))
    ));
}

fn fit_of(model: &MetricModel<f64>) -> FitResult<f64> {
    FitResult {
        model: model.to_factor(3).unwrap(),
        loss_history: vec![(0, 0.5)],
        iterations_run: 1,
        seed: 9,
        wall_time: 0.0,
        final_loss: 0.5,
        final_grad_norm: 0.0,
        restarts: 0,
    }
}

#[test]
fn report_against_itself() {
    let (ds, star) = labeled(4);
    let (train, test) = ds.split_at(400);
    let report = eval_report(&fit_of(&star), &train, &test, Some(&star)).unwrap();
    assert_eq!(report.train_acc_clean, Some(1.0));
    assert_eq!(report.test_acc_clean, Some(1.0));
    assert!(report.rel_spectral.unwrap() < 1e-12);
    assert!(report.rel_frobenius.unwrap() < 1e-12);
    let es = report.eig_star.as_ref().unwrap();
    for (a, b) in report.eig_hat.iter().zip(es) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(report.fractions_valid());
    assert_eq!(report.seed, 9);
    assert_eq!(report.csv_record().len(), EvalReport::CSV_HEADER.len());
    assert_eq!(report, eval_report(&fit_of(&star), &train, &test, Some(&star)).unwrap());

    let bare = eval_report(&fit_of(&star), &train, &test, None).unwrap();
    assert!(bare.rel_spectral.is_none() && bare.eig_star.is_none());
}

#[test]
fn report_serializes_flat() {
    let (ds, star) = labeled(5);
    let report = eval_report(&fit_of(&star), &ds, &Dataset::empty(3), Some(&star)).unwrap();
    assert!(report.test_acc_noisy.is_none());
    let json = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

proptest! {
    #[test]
    fn accuracy_and_disagreement_sum_to_one(seed in 0u64..100_000) {
        let (ds, _) = labeled(seed % 50);
        let mut r = rng(seed);
        let m = MetricModel::new(random_psd(3, &mut r), 0.8).unwrap();
        for ch in [Channel::Noisy, Channel::Clean] {
            let a = accuracy(&m, &ds, ch).unwrap();
            let d = disagreement(&m, &ds, ch).unwrap();
            prop_assert_eq!(a + d, 1.0);
        }
    }

    #[test]
    fn factor_and_metric_reports_agree(seed in 0u64..1000) {
        let (ds, _) = labeled(seed);
        let mut r = rng(seed + 1);
        let f = FactorModel::new(gaussian(3, 2, &mut r), 1.0).unwrap();
        let m = f.to_metric();
        prop_assert_eq!(
            accuracy(&f, &ds, Channel::Noisy).unwrap(),
            accuracy(&m, &ds, Channel::Noisy).unwrap()
        );
    }
}
