//! Metric hypotheses, labeled pair data and the model-space operations on them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, max_asymmetry, sym_eigendecomp, sym_spectral_norm, symmetrize};
use crate::scalar::{stable_sum, Scalar};

/// Condition number above which a unit change is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Pair label; `Close` is encoded as −1 and `Far` as +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Close,
    Far,
}

impl Label {
    /// Far iff the squared distance reaches the threshold (ties are Far).
    #[inline]
    pub fn from_distance<T: Scalar>(msq: T, tau: T) -> Self {
        if msq >= tau {
            Label::Far
        } else {
            Label::Close
        }
    }

    #[inline]
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Close => -1,
            Label::Far => 1,
        }
    }

    #[inline]
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Label::Close => -T::one(),
            Label::Far => T::one(),
        }
    }

    pub fn from_int(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Label::Close),
            1 => Ok(Label::Far),
            other => Err(Error::Format(format!("label must be -1 or +1, got {other}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Close => Label::Far,
            Label::Far => Label::Close,
        }
    }
}

/// Anything that assigns a squared distance to a difference vector and
/// compares it against a threshold.
pub trait Hypothesis<T: Scalar> {
    fn dim(&self) -> usize;

    /// Threshold used for decisions.
    fn threshold(&self) -> T;

    /// Squared distances of every column of a packed `d×N` matrix.
    fn quad_forms(&self, zs: &DMatrix<T>) -> Result<Vec<T>>;

    fn mahalanobis_sq(&self, z: &DVector<T>) -> Result<T>;

    fn predict(&self, z: &DVector<T>) -> Result<Label> {
        Ok(Label::from_distance(self.mahalanobis_sq(z)?, self.threshold()))
    }

    fn predict_all(&self, zs: &DMatrix<T>) -> Result<Vec<Label>> {
        let tau = self.threshold();
        Ok(self
            .quad_forms(zs)?
            .into_iter()
            .map(|q| Label::from_distance(q, tau))
            .collect())
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// PSD matrix `M` with a nonnegative threshold `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricModel<T: Scalar> {
    matrix: DMatrix<T>,
    tau: T,
}

impl<T: Scalar> MetricModel<T> {
    /// Validates symmetry (1e−10 elementwise), PSD-ness (λ_min ≥ −1e−8) and `τ ≥ 0`.
    pub fn new(matrix: DMatrix<T>, tau: T) -> Result<Self> {
        let model = Self {
            matrix: symmetrize(&matrix),
            tau,
        };
        model.check(&matrix)?;
        Ok(model)
    }

    pub(crate) fn from_parts_unchecked(matrix: DMatrix<T>, tau: T) -> Self {
        Self {
            matrix: symmetrize(&matrix),
            tau,
        }
    }

    fn check(&self, raw: &DMatrix<T>) -> Result<()> {
        if raw.nrows() != raw.ncols() {
            return Err(Error::InvalidModel(format!(
                "matrix must be square, got {}x{}",
                raw.nrows(),
                raw.ncols()
            )));
        }
        if raw.nrows() == 0 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        if raw.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::InvalidModel("matrix has non-finite entries".into()));
        }
        let scale = raw.amax().max(T::one());
        let asym = max_asymmetry(raw);
        if asym > T::tol(1e-10) * scale {
            return Err(Error::NotSymmetric(asym.as_f64()));
        }
        if !(self.tau >= T::zero()) || !self.tau.is_finite_value() {
            return Err(Error::InvalidModel(format!("tau must be finite and >= 0, got {}", self.tau)));
        }
        let low = self.min_eigenvalue()?;
        if low < -(T::tol(1e-8) * scale) {
            return Err(Error::InvalidModel(format!("matrix is not PSD (min eigenvalue {low:e})")));
        }
        Ok(())
    }

    /// Re-checks every invariant.
    pub fn validate(&self) -> Result<()> {
        self.check(&self.matrix)
    }

    pub fn identity(d: usize, tau: T) -> Result<Self> {
        Self::new(DMatrix::identity(d, d), tau)
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        let eig = sym_eigendecomp(&self.matrix)?;
        Ok(eig.values[eig.values.len() - 1])
    }

    /// Eigenvalues of `M`, descending.
    pub fn spectrum(&self) -> Result<Vec<T>> {
        Ok(sym_eigendecomp(&self.matrix)?.values.iter().copied().collect())
    }

    /// `(c·M, c·τ)` for `c > 0`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        if !(c > T::zero()) {
            return Err(Error::Domain(format!("scale factor must be positive, got {c}")));
        }
        Ok(Self {
            matrix: &self.matrix * c,
            tau: self.tau * c,
        })
    }

    /// `M/τ`, the identifiable part of the model.
    pub fn ratio(&self) -> Result<DMatrix<T>> {
        if self.tau <= T::zero() {
            return Err(Error::ZeroThreshold);
        }
        Ok(&self.matrix / self.tau)
    }

    /// Factor `A = V_k·diag(√λ_k)` with `AAᵀ` equal to the rank-`k` part of `M`.
    pub fn to_factor(&self, k: usize) -> Result<FactorModel<T>> {
        let d = self.dim();
        if k == 0 || k > d {
            return Err(Error::RankOutOfRange { k, max: d });
        }
        let eig = sym_eigendecomp(&self.matrix)?;
        let mut a = DMatrix::zeros(d, k);
        for j in 0..k {
            let s = eig.values[j].max(T::zero()).sqrt();
            a.set_column(j, &(eig.vectors.column(j) * s));
        }
        FactorModel::new(a, self.tau)
    }
}

impl<T: Scalar> Hypothesis<T> for MetricModel<T> {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn threshold(&self) -> T {
        self.tau
    }

    fn quad_forms(&self, zs: &DMatrix<T>) -> Result<Vec<T>> {
        check_dim(self.dim(), zs.nrows())?;
        let mz = &self.matrix * zs;
        Ok(zs.column_iter().zip(mz.column_iter()).map(|(z, m)| z.dot(&m)).collect())
    }

    fn mahalanobis_sq(&self, z: &DVector<T>) -> Result<T> {
        check_dim(self.dim(), z.len())?;
        Ok(z.dot(&(&self.matrix * z)))
    }
}

/// Unconstrained parameterization `M = AAᵀ`, `A` of shape `d×k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel<T: Scalar> {
    factor: DMatrix<T>,
    tau: T,
}

impl<T: Scalar> FactorModel<T> {
    pub fn new(factor: DMatrix<T>, tau: T) -> Result<Self> {
        let (d, k) = factor.shape();
        if d == 0 || k == 0 || k > d {
            return Err(Error::InvalidModel(format!("factor must be d×k with 1 <= k <= d, got {d}x{k}")));
        }
        Ok(Self { factor, tau })
    }

    pub fn factor(&self) -> &DMatrix<T> {
        &self.factor
    }

    pub fn factor_mut(&mut self) -> &mut DMatrix<T> {
        &mut self.factor
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn set_tau(&mut self, tau: T) {
        self.tau = tau;
    }

    pub fn rank_bound(&self) -> usize {
        self.factor.ncols()
    }

    /// `(AAᵀ, max(τ, 0))`.
    pub fn to_metric(&self) -> MetricModel<T> {
        factor_to_metric(self)
    }
}

impl<T: Scalar> Hypothesis<T> for FactorModel<T> {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn threshold(&self) -> T {
        self.tau
    }

    fn quad_forms(&self, zs: &DMatrix<T>) -> Result<Vec<T>> {
        check_dim(self.dim(), zs.nrows())?;
        let w = self.factor.tr_mul(zs);
        Ok(w.column_iter().map(|c| c.norm_squared()).collect())
    }

    fn mahalanobis_sq(&self, z: &DVector<T>) -> Result<T> {
        check_dim(self.dim(), z.len())?;
        Ok(self.factor.tr_mul(z).norm_squared())
    }
}

/// One difference vector `z = x − y` with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair<T: Scalar> {
    pub z: DVector<T>,
    pub label: Label,
}

/// Labeled pairs stored column-wise in a `d×N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    zs: DMatrix<T>,
    labels: Vec<Label>,
    clean: Option<Vec<Label>>,
    support_bound: Option<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(zs: DMatrix<T>, labels: Vec<Label>, clean: Option<Vec<Label>>) -> Result<Self> {
        check_dim(zs.ncols(), labels.len())?;
        if let Some(c) = &clean {
            check_dim(labels.len(), c.len())?;
        }
        if zs.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::Domain("dataset has non-finite entries".into()));
        }
        Ok(Self {
            zs,
            labels,
            clean,
            support_bound: None,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            zs: DMatrix::zeros(dim, 0),
            labels: Vec::new(),
            clean: None,
            support_bound: None,
        }
    }

    pub fn from_pairs(dim: usize, pairs: &[LabeledPair<T>]) -> Result<Self> {
        let mut zs = DMatrix::zeros(dim, pairs.len());
        for (j, p) in pairs.iter().enumerate() {
            check_dim(dim, p.z.len())?;
            zs.set_column(j, &p.z);
        }
        Self::new(zs, pairs.iter().map(|p| p.label).collect(), None)
    }

    pub fn dim(&self) -> usize {
        self.zs.nrows()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Packed differences, one pair per column.
    pub fn zs(&self) -> &DMatrix<T> {
        &self.zs
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn clean_labels(&self) -> Option<&[Label]> {
        self.clean.as_deref()
    }

    pub fn pair(&self, i: usize) -> LabeledPair<T> {
        LabeledPair {
            z: self.zs.column(i).into_owned(),
            label: self.labels[i],
        }
    }

    pub fn support_bound(&self) -> Option<T> {
        self.support_bound
    }

    pub fn max_sq_norm(&self) -> T {
        self.zs
            .column_iter()
            .map(|c| c.norm_squared())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Declares `F`; fails if some `‖z‖²` exceeds it.
    pub fn with_support_bound(mut self, big_f: T) -> Result<Self> {
        let observed = self.max_sq_norm();
        if observed > big_f {
            return Err(Error::Domain(format!("support bound {big_f} below observed max ‖z‖² {observed}")));
        }
        self.support_bound = Some(big_f);
        Ok(self)
    }

    /// Attaches the observed `F = max ‖z‖²`.
    pub fn with_observed_support(mut self) -> Self {
        self.support_bound = Some(self.max_sq_norm());
        self
    }

    /// First `n` pairs and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let part = |lo: usize, hi: usize| Self {
            zs: self.zs.columns(lo, hi - lo).into_owned(),
            labels: self.labels[lo..hi].to_vec(),
            clean: self.clean.as_ref().map(|c| c[lo..hi].to_vec()),
            support_bound: self.support_bound,
        };
        (part(0, n), part(n, self.len()))
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let mut zs = DMatrix::zeros(self.dim(), self.len() + other.len());
        zs.columns_mut(0, self.len()).copy_from(&self.zs);
        zs.columns_mut(self.len(), other.len()).copy_from(&other.zs);
        let labels = [self.labels.as_slice(), other.labels.as_slice()].concat();
        let clean = match (&self.clean, &other.clean) {
            (Some(a), Some(b)) => Some([a.as_slice(), b.as_slice()].concat()),
            _ => None,
        };
        Self::new(zs, labels, clean)
    }

    /// Same labels, differences replaced by `U·z`.
    pub fn transformed(&self, u: &DMatrix<T>) -> Result<Self> {
        check_dim(self.dim(), u.ncols())?;
        Self::new(u * &self.zs, self.labels.clone(), self.clean.clone())
    }

    /// Same labels with the differences replaced wholesale.
    pub fn with_zs(&self, zs: DMatrix<T>) -> Result<Self> {
        Self::new(zs, self.labels.clone(), self.clean.clone())
    }

    /// Fraction of noisy labels that disagree with the clean channel.
    pub fn mislabel_fraction(&self) -> Result<f64> {
        let clean = self.clean.as_ref().ok_or(Error::MissingLabels("clean_label"))?;
        if clean.is_empty() {
            return Ok(0.0);
        }
        let wrong = clean.iter().zip(&self.labels).filter(|(a, b)| a != b).count();
        Ok(wrong as f64 / clean.len() as f64)
    }

    /// Fraction of `Far` labels.
    pub fn far_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l == Label::Far).count() as f64 / self.len() as f64
    }
}

/// `(AAᵀ, max(τ, 0))`; PSD by construction.
pub fn factor_to_metric<T: Scalar>(f: &FactorModel<T>) -> MetricModel<T> {
    let m = &f.factor * f.factor.transpose();
    MetricModel::from_parts_unchecked(m, f.tau.max(T::zero()))
}

/// Zeroes all but the `k` largest eigenvalues. Returns the model and `γ`, the
/// largest eigenvalue zeroed (0 when `k = d`).
pub fn truncate_metric<T: Scalar>(m: &MetricModel<T>, k: usize) -> Result<(MetricModel<T>, T)> {
    let d = m.dim();
    if k == 0 || k > d {
        return Err(Error::RankOutOfRange { k, max: d });
    }
    if k == d {
        return Ok((m.clone(), T::zero()));
    }
    let eig = sym_eigendecomp(&m.matrix)?;
    let gamma = eig.values[k];
    let mut kept = eig.clone();
    for i in k..d {
        kept.values[i] = T::zero();
    }
    Ok((MetricModel::from_parts_unchecked(kept.reconstruct(), m.tau), gamma))
}

/// Zeroes all but the `k` largest singular values of `A`. Returns the factor
/// and the largest singular value zeroed (0 when nothing is removed).
pub fn truncate_factor<T: Scalar>(f: &FactorModel<T>, k: usize) -> Result<(FactorModel<T>, T)> {
    let kb = f.rank_bound();
    if k == 0 || k > kb {
        return Err(Error::RankOutOfRange { k, max: kb });
    }
    if k == kb {
        return Ok((f.clone(), T::zero()));
    }
    let svd = f.factor.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut a = DMatrix::zeros(f.dim(), kb);
    for &i in order.iter().take(k) {
        a += u.column(i) * vt.row(i) * s[i];
    }
    let gamma = s[order[k]];
    Ok((FactorModel::new(a, f.tau)?, gamma))
}

/// `‖M₁ − M₂‖₂ + |τ₁ − τ₂|`.
pub fn model_distance<T: Scalar>(a: &MetricModel<T>, b: &MetricModel<T>) -> Result<T> {
    check_dim(a.dim(), b.dim())?;
    let diff = &a.matrix - &b.matrix;
    Ok(sym_spectral_norm(&diff)? + (a.tau - b.tau).abs())
}

/// Sample mean of `|(zᵀM₁z − τ₁) − (zᵀM₂z − τ₂)|` over the columns of `zs`.
pub fn l1f_distance_mc<T: Scalar>(a: &MetricModel<T>, b: &MetricModel<T>, zs: &DMatrix<T>) -> Result<T> {
    check_dim(a.dim(), b.dim())?;
    if zs.ncols() == 0 {
        return Err(Error::Empty("l1f sample"));
    }
    let qa = a.quad_forms(zs)?;
    let qb = b.quad_forms(zs)?;
    let total = stable_sum(qa.iter().zip(&qb).map(|(&x, &y)| ((x - a.tau) - (y - b.tau)).abs()));
    Ok(total / T::lit(zs.ncols() as f64))
}

/// Re-expresses a model in new units `z′ = U·z`: `M′ = U⁻ᵀ M U⁻¹`, `τ′ = τ`.
/// Also returns the condition number of `U`.
pub fn unit_change<T: Scalar>(m: &MetricModel<T>, u: &DMatrix<T>) -> Result<(MetricModel<T>, T)> {
    check_dim(m.dim(), u.nrows())?;
    let cond = condition_number(u)?;
    if !(cond <= T::lit(MAX_CONDITION)) {
        return Err(Error::Singular(cond.as_f64()));
    }
    let inv = u.clone().try_inverse().ok_or(Error::Singular(cond.as_f64()))?;
    let mp = inv.transpose() * &m.matrix * &inv;
    Ok((MetricModel::from_parts_unchecked(mp, m.tau), cond))
}

/// Maps a model learned on `z′ = U·z` back to original units: `UᵀM′U`.
pub fn pull_back<T: Scalar>(m: &MetricModel<T>, u: &DMatrix<T>) -> Result<MetricModel<T>> {
    check_dim(m.dim(), u.nrows())?;
    let back = u.transpose() * &m.matrix * u;
    Ok(MetricModel::from_parts_unchecked(back, m.tau))
}

/// Relative spectral and Frobenius errors of `M̂/τ̂` against `M*/τ*`.
pub fn relative_errors<T: Scalar>(hat: &MetricModel<T>, star: &MetricModel<T>) -> Result<(T, T)> {
    check_dim(star.dim(), hat.dim())?;
    let r_star = star.ratio()?;
    let r_hat = hat.ratio()?;
    let diff = &r_hat - &r_star;
    let spectral = sym_spectral_norm(&diff)? / sym_spectral_norm(&r_star)?;
    let frobenius = diff.norm() / r_star.norm();
    Ok((spectral, frobenius))
}
