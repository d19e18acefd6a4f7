//! Empirical negative log-likelihood `R_N` and its gradients.
//!
//! `R_N(M, τ) = −(1/N) Σ log Φ(ℓᵢ(zᵢᵀMzᵢ − τ))`. All sums run in index order
//! with compensated accumulation, so results do not depend on thread count.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Dataset, FactorModel, Hypothesis, MetricModel};
use crate::noise::NoiseSpec;
use crate::scalar::{CompensatedSum, Scalar};

/// A dataset paired with the noise model assumed by the loss.
#[derive(Debug, Clone)]
pub struct RiskContext<'a, T: Scalar> {
    data: &'a Dataset<T>,
    noise: NoiseSpec<T>,
    /// `Zᵀ`, one pair per row.
    zt: DMatrix<T>,
    signs: Vec<T>,
}

/// Scratch buffers for repeated factor-gradient evaluations.
#[derive(Debug, Clone)]
pub struct GradientWorkspace<T: Scalar> {
    wt: DMatrix<T>,
    q: Vec<T>,
    pub grad_a: DMatrix<T>,
    pub grad_tau: T,
}

impl<T: Scalar> GradientWorkspace<T> {
    pub fn new(n: usize, d: usize, k: usize) -> Self {
        Self {
            wt: DMatrix::zeros(n, k),
            q: vec![T::zero(); n],
            grad_a: DMatrix::zeros(d, k),
            grad_tau: T::zero(),
        }
    }

    /// `sqrt(‖∇A‖²_F + (∂τ)²)` of the last evaluation.
    pub fn grad_norm(&self) -> T {
        (self.grad_a.norm_squared() + self.grad_tau * self.grad_tau).sqrt()
    }
}

impl<'a, T: Scalar> RiskContext<'a, T> {
    pub fn new(data: &'a Dataset<T>, noise: NoiseSpec<T>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        Ok(Self {
            data,
            noise,
            zt: data.zs().transpose(),
            signs: data.labels().iter().map(|l| l.sign()).collect(),
        })
    }

    pub fn dataset(&self) -> &Dataset<T> {
        self.data
    }

    pub fn noise(&self) -> &NoiseSpec<T> {
        &self.noise
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    fn mean_loss(&self, q: &[T], tau: T) -> T {
        let acc: CompensatedSum<T> = q
            .iter()
            .zip(&self.signs)
            .map(|(&qi, &s)| self.noise.nll(s * (qi - tau)))
            .collect();
        acc.value() / T::lit(self.len() as f64)
    }

    /// `R_N` for either parameterization.
    pub fn empirical_risk<H: Hypothesis<T>>(&self, model: &H) -> Result<T> {
        let q = model.quad_forms(self.data.zs())?;
        Ok(self.mean_loss(&q, model.threshold()))
    }

    /// Per-pair losses `−log Φ(ℓᵢ(qᵢ − τ))`.
    pub fn pair_losses<H: Hypothesis<T>>(&self, model: &H) -> Result<Vec<T>> {
        let tau = model.threshold();
        Ok(model
            .quad_forms(self.data.zs())?
            .iter()
            .zip(&self.signs)
            .map(|(&qi, &s)| self.noise.nll(s * (qi - tau)))
            .collect())
    }

    /// `R_N` at `(A, τ)` with `∂/∂A` and `∂/∂τ` written into `ws`.
    pub fn loss_and_gradient_into(&self, a: &DMatrix<T>, tau: T, ws: &mut GradientWorkspace<T>) -> Result<T> {
        self.gradient_into(a, tau, ws, true).map(|l| l.expect("loss requested"))
    }

    /// Gradient into `ws`; the loss is evaluated only when `with_loss` is set.
    pub fn gradient_into(
        &self,
        a: &DMatrix<T>,
        tau: T,
        ws: &mut GradientWorkspace<T>,
        with_loss: bool,
    ) -> Result<Option<T>> {
        let n = self.len();
        let (d, k) = a.shape();
        if d != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                actual: d,
            });
        }
        if ws.wt.shape() != (n, k) || ws.grad_a.shape() != (d, k) {
            *ws = GradientWorkspace::new(n, d, k);
        }
        // Row i of Wᵀ is wᵢ = Aᵀzᵢ.
        self.zt.mul_to(a, &mut ws.wt);
        let q = &mut ws.q;
        q.iter_mut().for_each(|x| *x = T::zero());
        let wt = ws.wt.as_mut_slice();
        for col in wt.chunks_exact(n) {
            for (qi, &w) in q.iter_mut().zip(col) {
                *qi += w * w;
            }
        }
        let inv_n = T::one() / T::lit(n as f64);
        let mut loss = CompensatedSum::new();
        let mut tau_acc = CompensatedSum::new();
        for (qi, &s) in q.iter_mut().zip(&self.signs) {
            let margin = s * (*qi - tau);
            let g = if with_loss {
                let (v, g) = self.noise.nll_and_slope(margin);
                loss.add(v);
                g
            } else {
                self.noise.slope(margin)
            };
            let c = g * s * inv_n;
            tau_acc.add(-c);
            // q is reused to hold the per-pair weight.
            *qi = c;
        }
        for col in wt.chunks_exact_mut(n) {
            for (w, &c) in col.iter_mut().zip(q.iter()) {
                *w *= c;
            }
        }
        // ∂/∂A = 2·Z·(C⊙Wᵀ)
        self.data.zs().mul_to(&ws.wt, &mut ws.grad_a);
        ws.grad_a *= T::lit(2.0);
        ws.grad_tau = tau_acc.value();
        Ok(with_loss.then(|| loss.value() * inv_n))
    }

    /// `(R_N, ∂R_N/∂A, ∂R_N/∂τ)` at a factor model.
    pub fn loss_and_gradient(&self, f: &FactorModel<T>) -> Result<(T, DMatrix<T>, T)> {
        let mut ws = GradientWorkspace::new(self.len(), f.dim(), f.rank_bound());
        let loss = self.loss_and_gradient_into(f.factor(), f.tau(), &mut ws)?;
        Ok((loss, ws.grad_a, ws.grad_tau))
    }

    pub fn risk_gradient(&self, f: &FactorModel<T>) -> Result<(DMatrix<T>, T)> {
        let (_, ga, gt) = self.loss_and_gradient(f)?;
        Ok((ga, gt))
    }

    /// `(R_N, ∂R_N/∂M, ∂R_N/∂τ)` for an arbitrary symmetric `M` (not
    /// necessarily PSD) and any `τ`.
    pub fn metric_loss_and_gradient(&self, m: &DMatrix<T>, tau: T) -> Result<(T, DMatrix<T>, T)> {
        let d = self.data.dim();
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: m.nrows(),
            });
        }
        let mz = &self.zt * m;
        let inv_n = T::one() / T::lit(self.len() as f64);
        let mut loss = CompensatedSum::new();
        let mut tau_acc = CompensatedSum::new();
        let mut weighted = self.zt.clone();
        for i in 0..self.len() {
            let q = self.zt.row(i).dot(&mz.row(i));
            let s = self.signs[i];
            let (v, g) = self.noise.nll_and_slope(s * (q - tau));
            loss.add(v);
            let c = g * s * inv_n;
            tau_acc.add(-c);
            weighted.row_mut(i).scale_mut(c);
        }
        let grad_m = self.zt.tr_mul(&weighted);
        Ok((loss.value() * inv_n, grad_m, tau_acc.value()))
    }
}

fn interpolate<T: Scalar>(a: &MetricModel<T>, b: &MetricModel<T>, lambda: T) -> Result<MetricModel<T>> {
    let mu = T::one() - lambda;
    MetricModel::new(a.matrix() * lambda + b.matrix() * mu, a.tau() * lambda + b.tau() * mu)
}

/// `R_N(λa + (1−λ)b) − [λR_N(a) + (1−λ)R_N(b)]`; never positive for a
/// convex risk beyond rounding.
pub fn convexity_probe<T: Scalar>(
    ctx: &RiskContext<'_, T>,
    a: &MetricModel<T>,
    b: &MetricModel<T>,
    lambda: T,
) -> Result<T> {
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::Domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let ra = ctx.empirical_risk(a)?;
    let rb = ctx.empirical_risk(b)?;
    if lambda == T::one() {
        return Ok(T::zero());
    }
    if lambda == T::zero() {
        return Ok(T::zero());
    }
    let mid = ctx.empirical_risk(&interpolate(a, b, lambda)?)?;
    Ok(mid - (lambda * ra + (T::one() - lambda) * rb))
}

/// Per-sample expected losses `E_ℓ[−log Φ(ℓ(ẑᵀM̂ẑ − τ̂))]` when labels come
/// from `star` under `noise`.
pub fn true_risk_terms<T: Scalar>(
    model: &MetricModel<T>,
    star: &MetricModel<T>,
    noise: &NoiseSpec<T>,
    zs: &DMatrix<T>,
) -> Result<Vec<T>> {
    if zs.ncols() == 0 {
        return Err(Error::Empty("true-risk sample"));
    }
    let q_hat = model.quad_forms(zs)?;
    let q_star = star.quad_forms(zs)?;
    Ok(q_hat
        .iter()
        .zip(&q_star)
        .map(|(&qh, &qs)| {
            let m_star = qs - star.tau();
            let m_hat = qh - model.tau();
            let p_far = (-noise.nll(m_star)).exp();
            let p_close = (-noise.nll(-m_star)).exp();
            p_far * noise.nll(m_hat) + p_close * noise.nll(-m_hat)
        })
        .collect())
}

/// Monte Carlo estimate of the true risk `R(M, τ)` over caller-supplied samples.
pub fn true_risk_mc<T: Scalar>(
    model: &MetricModel<T>,
    star: &MetricModel<T>,
    noise: &NoiseSpec<T>,
    zs: &DMatrix<T>,
) -> Result<T> {
    let terms = true_risk_terms(model, star, noise, zs)?;
    let n = T::lit(terms.len() as f64);
    Ok(crate::scalar::stable_sum(terms) / n)
}
