//! Accuracy and recovery metrics, plus the sample-complexity, cover-size and
//! recovery-gap calculators (all computed in log space where they can overflow).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{factor_to_metric, relative_errors, Dataset, Hypothesis, Label, MetricModel};
use crate::scalar::Scalar;
use crate::solver::FitResult;

/// Which label channel of a dataset to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Noisy,
    Clean,
}

fn channel<T: Scalar>(data: &Dataset<T>, which: Channel) -> Result<&[Label]> {
    match which {
        Channel::Noisy => Ok(data.labels()),
        Channel::Clean => data.clean_labels().ok_or(Error::MissingLabels("clean_label")),
    }
}

/// Fraction of pairs whose prediction matches the chosen labels.
pub fn accuracy<T: Scalar, H: Hypothesis<T>>(model: &H, data: &Dataset<T>, which: Channel) -> Result<f64> {
    let labels = channel(data, which)?;
    if labels.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let pred = model.predict_all(data.zs())?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `1 − accuracy`.
pub fn disagreement<T: Scalar, H: Hypothesis<T>>(model: &H, data: &Dataset<T>, which: Channel) -> Result<f64> {
    Ok(1.0 - accuracy(model, data, which)?)
}

fn require_positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite_value() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Inputs to the uniform-convergence sample-size bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityArgs<T> {
    pub eps: T,
    pub delta: T,
    pub d: usize,
    pub zeta: T,
    pub big_f: T,
    pub big_b: T,
    pub beta: T,
    pub big_t: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity<T> {
    /// Number of pairs (callers take the ceiling).
    pub value: T,
    /// Set when `B > βF`, i.e. the threshold range is wider than the
    /// largest possible squared distance.
    pub meta_assumption_violated: bool,
}

/// `9ζ(F+1)²T²/(2ε²)·[ln(6ζ(1+F)B/(εδ)) + d²·ln(12ζ(1+F)β/ε) + (3/2)·d²·ln d]`.
pub fn sample_complexity<T: Scalar>(args: &ComplexityArgs<T>) -> Result<SampleComplexity<T>> {
    let ComplexityArgs {
        eps,
        delta,
        d,
        zeta,
        big_f,
        big_b,
        beta,
        big_t,
    } = *args;
    for (name, v) in [
        ("eps", eps),
        ("delta", delta),
        ("zeta", zeta),
        ("F", big_f),
        ("B", big_b),
        ("beta", beta),
        ("T", big_t),
    ] {
        require_positive(name, v)?;
    }
    if d == 0 {
        return Err(Error::Domain("d must be at least 1".into()));
    }
    if eps >= T::one() || delta >= T::one() {
        return Err(Error::Domain("eps and delta must lie in (0, 1)".into()));
    }
    let one = T::one();
    let dd = T::lit(d as f64);
    let d2 = dd * dd;
    let lead = T::lit(9.0) * zeta * (big_f + one).powi(2) * big_t * big_t / (T::lit(2.0) * eps * eps);
    let bracket = (T::lit(6.0) * zeta * (one + big_f) * big_b / (eps * delta)).ln()
        + d2 * (T::lit(12.0) * zeta * (one + big_f) * beta / eps).ln()
        + T::lit(1.5) * d2 * dd.ln();
    Ok(SampleComplexity {
        value: lead * bracket,
        meta_assumption_violated: big_b > beta * big_f,
    })
}

/// `ln(B/α) + d²·ln(4βd√d/α)`: log of the size of an `α`-cover of the
/// model space.
pub fn log_cover_size<T: Scalar>(alpha: T, d: usize, big_b: T, beta: T) -> Result<T> {
    require_positive("alpha", alpha)?;
    require_positive("B", big_b)?;
    require_positive("beta", beta)?;
    if d == 0 {
        return Err(Error::Domain("d must be at least 1".into()));
    }
    let dd = T::lit(d as f64);
    Ok((big_b / alpha).ln() + dd * dd * (T::lit(4.0) * beta * dd * dd.sqrt() / alpha).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryBound<T> {
    pub ln_value: T,
    /// `exp(ln_value)` when it is a normal positive float, otherwise absent.
    pub value: Option<T>,
}

/// `ln C(d)` with `C(d) = c·π^{d/2}/Γ(d/2 + 1)`, the density floor times the
/// unit-ball volume.
pub fn ln_ball_constant<T: Scalar>(d: usize, c: T) -> T {
    let half = d as f64 / 2.0;
    c.ln() + T::lit(half * std::f64::consts::PI.ln() - libm::lgamma(half + 1.0))
}

/// Risk gap `ω²·C(d)²·ε²/(800·18^{2d})` that forces the model distance
/// below `ε`.
pub fn recovery_bound<T: Scalar>(eps: T, d: usize, c: T, omega: T) -> Result<RecoveryBound<T>> {
    require_positive("eps", eps)?;
    require_positive("c", c)?;
    require_positive("omega", omega)?;
    if d == 0 {
        return Err(Error::Domain("d must be at least 1".into()));
    }
    let two = T::lit(2.0);
    let ln_value = two * omega.ln() + two * ln_ball_constant(d, c) - T::lit(800.0).ln()
        - T::lit(2.0 * d as f64) * T::lit(18.0).ln()
        + two * eps.ln();
    let v = ln_value.exp();
    let value = (v.as_f64().is_normal()).then_some(v);
    Ok(RecoveryBound { ln_value, value })
}

/// One experiment's headline numbers, in double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_acc_noisy: f64,
    pub train_acc_clean: Option<f64>,
    pub test_acc_noisy: Option<f64>,
    pub test_acc_clean: Option<f64>,
    pub rel_spectral: Option<f64>,
    pub rel_frobenius: Option<f64>,
    /// Spectrum of `M̂/τ̂` (of `M̂` if `τ̂ = 0`), descending.
    pub eig_hat: Vec<f64>,
    /// Spectrum of `M*/τ*`, descending.
    pub eig_star: Option<Vec<f64>>,
    pub loss_final: f64,
    pub realized_mislabel: Option<f64>,
    pub iterations: usize,
    pub wall_time: f64,
    pub seed: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

impl EvalReport {
    pub const CSV_HEADER: [&'static str; 14] = [
        "train_acc_noisy",
        "train_acc_clean",
        "test_acc_noisy",
        "test_acc_clean",
        "rel_spectral",
        "rel_frobenius",
        "eig_hat",
        "eig_star",
        "loss_final",
        "realized_mislabel",
        "iterations",
        "wall_time",
        "seed",
        "fractions_valid",
    ];

    /// Flat record matching [`Self::CSV_HEADER`]; spectra are `;`-joined.
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            format!("{}", self.train_acc_noisy),
            opt(self.train_acc_clean),
            opt(self.test_acc_noisy),
            opt(self.test_acc_clean),
            opt(self.rel_spectral),
            opt(self.rel_frobenius),
            join(&self.eig_hat),
            self.eig_star.as_deref().map_or_else(String::new, join),
            format!("{}", self.loss_final),
            opt(self.realized_mislabel),
            format!("{}", self.iterations),
            format!("{}", self.wall_time),
            format!("{}", self.seed),
            format!("{}", self.fractions_valid()),
        ]
    }

    /// Every accuracy and mislabel fraction lies in `[0, 1]`.
    pub fn fractions_valid(&self) -> bool {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        ok(self.train_acc_noisy)
            && [
                self.train_acc_clean,
                self.test_acc_noisy,
                self.test_acc_clean,
                self.realized_mislabel,
            ]
            .into_iter()
            .flatten()
            .all(ok)
    }
}

fn spectrum_over_tau<T: Scalar>(m: &MetricModel<T>) -> Result<Vec<f64>> {
    let tau = m.tau();
    let div = if tau > T::zero() { tau } else { T::one() };
    Ok(m.spectrum()?.into_iter().map(|x| (x / div).as_f64()).collect())
}

/// Aggregates accuracies, recovery errors and spectra for a fit.
pub fn eval_report<T: Scalar>(
    fit: &FitResult<T>,
    train: &Dataset<T>,
    test: &Dataset<T>,
    star: Option<&MetricModel<T>>,
) -> Result<EvalReport> {
    let hat = factor_to_metric(&fit.model);
    let clean_acc = |data: &Dataset<T>| -> Result<Option<f64>> {
        if data.is_empty() || data.clean_labels().is_none() {
            Ok(None)
        } else {
            accuracy(&fit.model, data, Channel::Clean).map(Some)
        }
    };
    let (rel_spectral, rel_frobenius, eig_star) = match star {
        Some(s) => {
            let (rs, rf) = relative_errors(&hat, s)?;
            (Some(rs.as_f64()), Some(rf.as_f64()), Some(spectrum_over_tau(s)?))
        }
        None => (None, None, None),
    };
    Ok(EvalReport {
        train_acc_noisy: accuracy(&fit.model, train, Channel::Noisy)?,
        train_acc_clean: clean_acc(train)?,
        test_acc_noisy: if test.is_empty() {
            None
        } else {
            Some(accuracy(&fit.model, test, Channel::Noisy)?)
        },
        test_acc_clean: clean_acc(test)?,
        rel_spectral,
        rel_frobenius,
        eig_hat: spectrum_over_tau(&hat)?,
        eig_star,
        loss_final: fit.final_loss.as_f64(),
        realized_mislabel: train.mislabel_fraction().ok(),
        iterations: fit.iterations_run,
        wall_time: fit.wall_time,
        seed: fit.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn args(eps: f64, d: usize) -> ComplexityArgs<f64> {
        ComplexityArgs {
            eps,
            delta: 0.05,
            d,
            zeta: 1.0,
            big_f: 1.0,
            big_b: 1.0,
            beta: 1.0,
            big_t: 2.0,
        }
    }

    #[test]
    fn halving_eps_roughly_quadruples() {
        let a = sample_complexity(&args(0.1, 10)).unwrap().value;
        let b = sample_complexity(&args(0.05, 10)).unwrap().value;
        let r = b / a;
        assert!(r > 4.0 && r < 4.5, "{r}");
    }

    #[test]
    fn nonpositive_arguments_rejected() {
        assert!(sample_complexity(&args(0.0, 10)).is_err());
        assert!(sample_complexity(&args(1.5, 10)).is_err());
        assert!(sample_complexity(&args(0.1, 0)).is_err());
        assert!(log_cover_size(0.0, 3, 1.0, 1.0).is_err());
        assert!(recovery_bound(-1.0, 3, 1.0, 1.0).is_err());
    }

    #[test]
    fn meta_assumption_flag() {
        let mut a = args(0.1, 3);
        assert!(!sample_complexity(&a).unwrap().meta_assumption_violated);
        a.big_b = 5.0;
        assert!(sample_complexity(&a).unwrap().meta_assumption_violated);
    }

    #[test]
    fn cover_exponent_vanishes() {
        // 4βd√d/α = 1 at d = 1, β = 1, α = 4.
        let v = log_cover_size(4.0, 1, 1.0, 1.0).unwrap();
        assert!((v - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn recovery_bound_unit_ball_d1() {
        // Uniform density on [-1, 1] has c = 1/2, so C(1) = 1.
        let omega: f64 = 0.3;
        let eps: f64 = 0.2;
        let r = recovery_bound(eps, 1, 0.5, omega).unwrap();
        let expect = omega * omega / (800.0 * 324.0) * eps * eps;
        assert!((r.value.unwrap() - expect).abs() < 1e-15 * expect.max(1e-300) * 10.0);
    }

    #[test]
    fn accuracy_requires_channel() {
        let ds = Dataset::new(DMatrix::from_element(1, 2, 1.0), vec![Label::Far, Label::Close], None).unwrap();
        let m = MetricModel::identity(1, 0.5).unwrap();
        assert_eq!(accuracy(&m, &ds, Channel::Noisy).unwrap(), 0.5);
        assert!(matches!(accuracy(&m, &ds, Channel::Clean), Err(Error::MissingLabels(_))));
        assert_eq!(disagreement(&m, &ds, Channel::Noisy).unwrap(), 0.5);
    }
}
