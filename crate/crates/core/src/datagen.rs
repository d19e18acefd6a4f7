//! Synthetic pair data: Gaussian points, a planted low-rank metric, and
//! noisy threshold labels.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt_pair, sym_eigendecomp};
use crate::model::{Dataset, Hypothesis, Label, MetricModel};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::scalar::Scalar;

/// RNG substreams of one generation run.
pub mod streams {
    pub const SIGMA_BASIS: u64 = 0;
    pub const M_STAR_BASIS: u64 = 1;
    pub const PAIRS: u64 = 2;
    pub const LABELS: u64 = 3;
}

/// Bisection bracket for the noise scale.
pub const SCALE_BRACKET: (f64, f64) = (1e-6, 1e6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// Additive noise on the squared distance, scale calibrated so that the
    /// expected mislabel fraction equals `target`.
    NormNoise { noise: NoiseKind, target: f64 },
    /// With probability `p` the label is replaced by a fair coin.
    LabelFlip { p: f64 },
}

/// Missing fields default to [`SyntheticSpec::canonical`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub rank: usize,
    /// Nonzero eigenvalues of `M*`, `rank` of them.
    pub m_star_eigs: Vec<f64>,
    /// Eigenvalues of the point covariance `Σ`, `dim` of them.
    pub sigma_eigs: Vec<f64>,
    pub tau_star: f64,
    /// Total pairs generated; the first `n_train` form the training set.
    pub n_pairs: usize,
    pub n_train: usize,
    pub regime: Regime,
    pub seed: u64,
}

impl SyntheticSpec {
    /// d = 10, rank-5 `M*`, τ* = 1.3, 15000/5000 split, logistic noise at a
    /// 10% mislabel target.
    pub fn canonical() -> Self {
        Self {
            dim: 10,
            rank: 5,
            m_star_eigs: vec![0.32, 0.89, 0.59, 0.13, 0.14],
            sigma_eigs: vec![0.73, 0.7, 0.68, 0.59, 0.47, 0.45, 0.21, 0.19, 0.11, 0.04],
            tau_star: 1.3,
            n_pairs: 20_000,
            n_train: 15_000,
            regime: Regime::NormNoise {
                noise: NoiseKind::Logistic,
                target: 0.10,
            },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Domain("dim must be at least 1".into()));
        }
        if self.rank > self.dim {
            return Err(Error::RankOutOfRange {
                k: self.rank,
                max: self.dim,
            });
        }
        if self.m_star_eigs.len() != self.rank {
            return Err(Error::DimensionMismatch {
                expected: self.rank,
                actual: self.m_star_eigs.len(),
            });
        }
        if self.sigma_eigs.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: self.sigma_eigs.len(),
            });
        }
        let bad = |v: &f64| !(v.is_finite() && *v >= 0.0);
        if self.m_star_eigs.iter().any(bad) || self.sigma_eigs.iter().any(bad) {
            return Err(Error::Domain("eigenvalues must be finite and nonnegative".into()));
        }
        if !(self.tau_star > 0.0 && self.tau_star.is_finite()) {
            return Err(Error::Domain(format!("tau_star must be positive, got {}", self.tau_star)));
        }
        if self.n_train > self.n_pairs {
            return Err(Error::Domain(format!(
                "n_train {} exceeds n_pairs {}",
                self.n_train, self.n_pairs
            )));
        }
        match self.regime {
            Regime::NormNoise { target, .. } if !(0.0..0.5).contains(&target) => Err(Error::Domain(format!(
                "mislabel target must lie in [0, 0.5), got {target}"
            ))),
            Regime::LabelFlip { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::Domain(format!("flip probability must lie in [0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::canonical()
    }
}

/// `n` values drawn uniformly from `(0, 1]`.
pub fn random_eigs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| 1.0 - rng.random::<f64>()).collect()
}

/// Haar-distributed orthonormal matrix (QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`).
pub fn random_orthonormal<T: Scalar, R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<T> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.map(T::lit)
}

/// `U·diag(eigs)·Uᵀ` with a random orthonormal `U`.
pub fn make_spd<T: Scalar, R: Rng + ?Sized>(eigs: &[f64], rng: &mut R) -> Result<DMatrix<T>> {
    if eigs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("eigenvalues must be finite".into()));
    }
    let u: DMatrix<T> = random_orthonormal(eigs.len(), rng);
    let d = DVector::from_iterator(eigs.len(), eigs.iter().map(|&x| T::lit(x)));
    let m = &u * DMatrix::from_diagonal(&d) * u.transpose();
    Ok(crate::linalg::symmetrize(&m))
}

/// `n` differences `z = x − y` of independent `x, y ~ N(0, Σ)`, as columns.
pub fn sample_pairs<T: Scalar, R: Rng + ?Sized>(sigma: &DMatrix<T>, n: usize, rng: &mut R) -> Result<DMatrix<T>> {
    let d = sigma.nrows();
    let eig = sym_eigendecomp(sigma)?;
    let scale = sigma.amax().max(T::one());
    if d > 0 && eig.values[d - 1] < -(T::tol(1e-8) * scale) {
        return Err(Error::Domain(format!(
            "covariance is not PSD (min eigenvalue {:e})",
            eig.values[d - 1]
        )));
    }
    let (root, _) = psd_sqrt_pair(sigma, T::zero())?;
    let mut g = DMatrix::<T>::zeros(d, n);
    for mut col in g.column_iter_mut() {
        for v in col.iter_mut() {
            let x: f64 = StandardNormal.sample(rng);
            let y: f64 = StandardNormal.sample(rng);
            *v = T::lit(x - y);
        }
    }
    Ok(root * g)
}

/// `E‖x − y‖²_M = 2·tr(ΣM)` for independent `x, y ~ N(0, Σ)`.
pub fn expected_msq<T: Scalar>(sigma: &DMatrix<T>, m: &DMatrix<T>) -> Result<T> {
    if sigma.shape() != m.shape() || sigma.nrows() != sigma.ncols() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            actual: m.nrows(),
        });
    }
    Ok(sigma.component_mul(&m.transpose()).sum() * T::lit(2.0))
}

fn clean_labels<T: Scalar>(q: &[T], tau_star: T) -> Vec<Label> {
    q.iter().map(|&qi| Label::from_distance(qi, tau_star)).collect()
}

/// Labels `Far` iff `‖z‖²_{M*} + η ≥ τ*` with `η` drawn from `noise`.
/// Returns `(noisy, clean)`.
pub fn label_norm_noise<T: Scalar, R: Rng + ?Sized>(
    zs: &DMatrix<T>,
    star: &MetricModel<T>,
    noise: &NoiseSpec<T>,
    rng: &mut R,
) -> Result<(Vec<Label>, Vec<Label>)> {
    let q = star.quad_forms(zs)?;
    let eta = noise.sample(rng, q.len());
    let noisy = q
        .iter()
        .zip(&eta)
        .map(|(&qi, &e)| Label::from_distance(qi + e, star.tau()))
        .collect();
    Ok((noisy, clean_labels(&q, star.tau())))
}

/// With probability `p` each label is replaced by a fair coin, so about
/// `p/2` of the labels end up wrong. Returns `(noisy, clean)`.
pub fn label_flip<T: Scalar, R: Rng + ?Sized>(
    zs: &DMatrix<T>,
    star: &MetricModel<T>,
    p: f64,
    rng: &mut R,
) -> Result<(Vec<Label>, Vec<Label>)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("flip probability must lie in [0, 1], got {p}")));
    }
    let q = star.quad_forms(zs)?;
    let clean = clean_labels(&q, star.tau());
    let noisy = clean
        .iter()
        .map(|&l| {
            let exposed = rng.random::<f64>() < p;
            let coin = rng.random_bool(0.5);
            match (exposed, coin) {
                (false, _) => l,
                (true, true) => Label::Far,
                (true, false) => Label::Close,
            }
        })
        .collect();
    Ok((noisy, clean))
}

/// Expected mislabel fraction `mean Φ(−|qᵢ − τ*|/s)` at scale `s`.
pub fn expected_mislabel(margins: &[f64], kind: NoiseKind, s: f64) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    let noise = NoiseSpec::<f64>::standard(kind);
    let total: f64 = crate::scalar::stable_sum(margins.iter().map(|m| noise.cdf(-m.abs() / s)));
    total / margins.len() as f64
}

/// Noise scale whose expected mislabel fraction on `zs` equals `target`,
/// by bisection in `log s` over [`SCALE_BRACKET`].
pub fn calibrate_noise_scale<T: Scalar>(
    zs: &DMatrix<T>,
    star: &MetricModel<T>,
    kind: NoiseKind,
    target: f64,
) -> Result<f64> {
    if !(target > 0.0 && target < 0.5) {
        return Err(Error::Domain(format!("calibration target must lie in (0, 0.5), got {target}")));
    }
    let tau = star.tau().as_f64();
    let margins: Vec<f64> = star.quad_forms(zs)?.iter().map(|q| q.as_f64() - tau).collect();
    let (mut lo, mut hi) = (SCALE_BRACKET.0.ln(), SCALE_BRACKET.1.ln());
    let f_lo = expected_mislabel(&margins, kind, lo.exp());
    let f_hi = expected_mislabel(&margins, kind, hi.exp());
    if !(f_lo < target && target < f_hi) {
        return Err(Error::Infeasible {
            target,
            low: f_lo,
            high: f_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = expected_mislabel(&margins, kind, mid.exp());
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// `n` points uniform in the radius-`r` ball of `R^d`, as columns.
pub fn sample_uniform_ball<T: Scalar, R: Rng + ?Sized>(d: usize, n: usize, radius: f64, rng: &mut R) -> DMatrix<T> {
    let mut out = DMatrix::<T>::zeros(d, n);
    for mut col in out.column_iter_mut() {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let u: f64 = Open01.sample(rng);
        let r = radius * u.powf(1.0 / d as f64);
        for (v, x) in col.iter_mut().zip(g) {
            *v = T::lit(r * x / norm);
        }
    }
    out
}

/// Everything needed to reproduce and describe a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationInfo {
    pub spec: SyntheticSpec,
    /// Calibrated noise scale (norm-noise regime only).
    pub noise_scale: Option<f64>,
    pub realized_mislabel: f64,
    pub realized_mislabel_train: f64,
    pub realized_mislabel_test: f64,
    /// Fraction of `Far` labels among the clean labels.
    pub far_fraction_clean: f64,
    /// `F = max ‖z‖²` over all pairs.
    pub support_bound: f64,
    pub expected_msq: f64,
    pub empirical_msq: f64,
    pub seed: u64,
    pub streams: [u64; 4],
}

#[derive(Debug, Clone)]
pub struct Generated<T: Scalar> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub star: MetricModel<T>,
    pub sigma: DMatrix<T>,
    pub info: GenerationInfo,
}

impl<T: Scalar> Generated<T> {
    /// The loss-side noise model matching the generator (scale 1 for label flips).
    pub fn generating_noise(&self) -> Result<NoiseSpec<T>> {
        match (self.info.spec.regime, self.info.noise_scale) {
            (Regime::NormNoise { noise, .. }, Some(s)) => NoiseSpec::new(noise, T::lit(s)),
            (Regime::NormNoise { noise, .. }, None) => Ok(NoiseSpec::standard(noise)),
            (Regime::LabelFlip { .. }, _) => Ok(NoiseSpec::standard(NoiseKind::Logistic)),
        }
    }
}

/// Runs the full generation pipeline for `spec`.
pub fn generate<T: Scalar>(spec: &SyntheticSpec) -> Result<Generated<T>> {
    spec.validate()?;
    let d = spec.dim;
    let sigma: DMatrix<T> = make_spd(&spec.sigma_eigs, &mut spec.rng(streams::SIGMA_BASIS))?;
    let mut m_eigs = spec.m_star_eigs.clone();
    m_eigs.resize(d, 0.0);
    let m_star: DMatrix<T> = make_spd(&m_eigs, &mut spec.rng(streams::M_STAR_BASIS))?;
    let star = MetricModel::new(m_star, T::lit(spec.tau_star))?;
    let zs = sample_pairs(&sigma, spec.n_pairs, &mut spec.rng(streams::PAIRS))?;

    let mut label_rng = spec.rng(streams::LABELS);
    let (noisy, clean, noise_scale) = match spec.regime {
        Regime::NormNoise { noise, target } => {
            let s = if target == 0.0 || zs.ncols() == 0 {
                None
            } else {
                Some(calibrate_noise_scale(&zs, &star, noise, target)?)
            };
            match s {
                Some(s) => {
                    let ns = NoiseSpec::new(noise, T::lit(s))?;
                    let (n, c) = label_norm_noise(&zs, &star, &ns, &mut label_rng)?;
                    (n, c, Some(s))
                }
                None => {
                    let c = clean_labels(&star.quad_forms(&zs)?, star.tau());
                    (c.clone(), c, None)
                }
            }
        }
        Regime::LabelFlip { p } => {
            let (n, c) = label_flip(&zs, &star, p, &mut label_rng)?;
            (n, c, None)
        }
    };
    let far_clean = if clean.is_empty() {
        0.0
    } else {
        clean.iter().filter(|&&l| l == Label::Far).count() as f64 / clean.len() as f64
    };
    let all = Dataset::new(zs, noisy, Some(clean))?.with_observed_support();
    let (train, test) = all.split_at(spec.n_train);
    let q = star.quad_forms(all.zs())?;
    let empirical_msq = if q.is_empty() {
        0.0
    } else {
        crate::scalar::stable_sum(q.iter().map(|x| x.as_f64())) / q.len() as f64
    };
    let info = GenerationInfo {
        spec: spec.clone(),
        noise_scale,
        realized_mislabel: all.mislabel_fraction()?,
        realized_mislabel_train: train.mislabel_fraction()?,
        realized_mislabel_test: test.mislabel_fraction()?,
        far_fraction_clean: far_clean,
        support_bound: all.support_bound().map_or(0.0, |f| f.as_f64()),
        expected_msq: expected_msq(&sigma, star.matrix())?.as_f64(),
        empirical_msq,
        seed: spec.seed,
        streams: [
            streams::SIGMA_BASIS,
            streams::M_STAR_BASIS,
            streams::PAIRS,
            streams::LABELS,
        ],
    };
    Ok(Generated {
        train,
        test,
        star,
        sigma,
        info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: DMatrix<f64> = random_orthonormal(1, &mut rng);
        assert_eq!(u[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn equal_eigs_give_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m: DMatrix<f64> = make_spd(&[0.7; 4], &mut rng).unwrap();
        assert!((m - DMatrix::identity(4, 4) * 0.7).amax() < 1e-14);
    }

    #[test]
    fn zero_covariance_gives_zero_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = sample_pairs(&DMatrix::<f64>::zeros(3, 3), 10, &mut rng).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn non_psd_covariance_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(sample_pairs::<f64, _>(&sigma, 3, &mut rng).is_err());
    }

    #[test]
    fn expected_msq_formula() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert_eq!(expected_msq(&i, &i).unwrap(), 8.0);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.5]));
        assert_eq!(expected_msq(&a, &b).unwrap(), 8.0);
    }

    #[test]
    fn flip_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let zs = DMatrix::from_fn(2, 50, |i, j| ((i + j) as f64).cos());
        let star = MetricModel::identity(2, 0.8).unwrap();
        let (noisy, clean) = label_flip(&zs, &star, 0.0, &mut rng).unwrap();
        assert_eq!(noisy, clean);
        assert!(label_flip(&zs, &star, 1.5, &mut rng).is_err());
    }

    #[test]
    fn calibration_target_range() {
        let zs = DMatrix::from_column_slice(1, 1, &[1.0]);
        let star = MetricModel::identity(1, 2.0).unwrap();
        assert!(calibrate_noise_scale(&zs, &star, NoiseKind::Logistic, 0.0).is_err());
        assert!(calibrate_noise_scale(&zs, &star, NoiseKind::Logistic, 0.5).is_err());
    }

    #[test]
    fn calibration_infeasible_on_degenerate_data() {
        // Every margin is exactly zero, so every scale gives 1/2.
        let zs = DMatrix::from_column_slice(1, 2, &[1.0, -1.0]);
        let star = MetricModel::identity(1, 1.0).unwrap();
        assert!(matches!(
            calibrate_noise_scale(&zs, &star, NoiseKind::Logistic, 0.1),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec::canonical().validate().is_ok());
        let mut s = SyntheticSpec::canonical();
        s.rank = 11;
        assert!(s.validate().is_err());
        let mut s = SyntheticSpec::canonical();
        s.tau_star = 0.0;
        assert!(s.validate().is_err());
        let mut s = SyntheticSpec::canonical();
        s.regime = Regime::LabelFlip { p: 1.2 };
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_generation() {
        let mut s = SyntheticSpec::canonical();
        s.n_pairs = 0;
        s.n_train = 0;
        let g = generate::<f64>(&s).unwrap();
        assert!(g.train.is_empty() && g.test.is_empty());
    }
}
