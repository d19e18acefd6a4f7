//! Gradient descent on the factorization `M = AAᵀ`, and a projected-gradient
//! reference solver working directly on the PSD cone.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_project, symmetrize};
use crate::model::{Dataset, FactorModel, Hypothesis, MetricModel};
use crate::noise::NoiseSpec;
use crate::risk::{GradientWorkspace, RiskContext};
use crate::scalar::Scalar;

/// Largest dimension accepted by [`fit_projected`].
pub const PROJECTED_DIM_LIMIT: usize = 32;

/// Full-batch loss increase between history points treated as divergence.
pub const LOSS_RISE_TOL: f64 = 1e-6;

/// RNG stream used for the initial factor.
const INIT_STREAM: u64 = 4;
/// RNG stream used for minibatch shuffles.
const SHUFFLE_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub decay: f64,
    /// Iterations per epoch in full-batch mode.
    pub decay_every: usize,
    pub max_iters: usize,
    /// Columns of `A`; `None` means `d`.
    pub rank_bound: Option<usize>,
    pub init_scale: f64,
    pub seed: u64,
    /// Minibatch size; `None` (or `≥ N`) is full batch.
    pub batch_size: Option<usize>,
    /// Stop once `‖∇R_N‖ ≤ stop_tol`.
    pub stop_tol: f64,
    /// Record `R_N` every this many iterations.
    pub history_stride: usize,
    /// Learning-rate halvings allowed after a non-finite or rising loss.
    pub max_restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            decay: 0.95,
            decay_every: 100,
            max_iters: 30_000,
            rank_bound: None,
            init_scale: 1e-3,
            seed: 0,
            batch_size: None,
            stop_tol: 1e-8,
            history_stride: 100,
            max_restarts: 5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Domain(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Domain(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be at least 1".into()));
        }
        if self.decay_every == 0 || self.history_stride == 0 {
            return Err(Error::Domain("decay_every and history_stride must be at least 1".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Domain(format!("init_scale must be positive, got {}", self.init_scale)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Domain("batch_size must be at least 1".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::Domain(format!("stop_tol must be nonnegative, got {}", self.stop_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<T: Scalar> {
    pub model: FactorModel<T>,
    /// `(iteration, R_N)` at the configured stride, plus the final iterate.
    pub loss_history: Vec<(usize, T)>,
    pub iterations_run: usize,
    pub seed: u64,
    /// Seconds.
    pub wall_time: f64,
    pub final_loss: T,
    pub final_grad_norm: T,
    /// Learning-rate halvings triggered by non-finite or rising losses.
    pub restarts: usize,
}

/// Gaussian factor scaled by `init_scale`; `τ` is the median of `‖A₀ᵀzᵢ‖²`.
pub fn initial_factor<T: Scalar>(data: &Dataset<T>, k: usize, cfg: &SolverConfig) -> Result<FactorModel<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    let d = data.dim();
    let a = DMatrix::from_fn(d, k, |_, _| {
        let g: f64 = StandardNormal.sample(&mut rng);
        T::lit(g * cfg.init_scale)
    });
    let mut f = FactorModel::new(a, T::zero())?;
    let mut q = f.quad_forms(data.zs())?;
    q.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = q.len();
    let median = if n == 0 {
        T::zero()
    } else if n % 2 == 1 {
        q[n / 2]
    } else {
        (q[n / 2 - 1] + q[n / 2]) * T::lit(0.5)
    };
    f.set_tau(median);
    Ok(f)
}

fn all_finite<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.is_finite_value())
}

/// Minimizes `R_N(AAᵀ, τ)` over `(A, τ)` by gradient descent.
pub fn fit_factor<T: Scalar>(data: &Dataset<T>, noise: &NoiseSpec<T>, cfg: &SolverConfig) -> Result<FitResult<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let ctx = RiskContext::new(data, *noise)?;
    let d = data.dim();
    let k = cfg.rank_bound.unwrap_or(d);
    if k == 0 || k > d {
        return Err(Error::RankOutOfRange { k, max: d });
    }
    let init = initial_factor(data, k, cfg)?;
    let n = data.len();
    let batch = cfg.batch_size.filter(|&b| b < n);
    let mut state = DescentState::new(init, cfg, n, d, k);
    match batch {
        None => state.run_full(&ctx, cfg)?,
        Some(b) => state.run_minibatch(&ctx, cfg, b)?,
    }
    let mut ws = GradientWorkspace::new(n, d, k);
    let final_loss = ctx.loss_and_gradient_into(&state.a, state.tau, &mut ws)?;
    if state.history.last().map(|&(i, _)| i) != Some(state.iterations) {
        state.history.push((state.iterations, final_loss));
    }
    Ok(FitResult {
        model: FactorModel::new(state.a, state.tau)?,
        loss_history: state.history,
        iterations_run: state.iterations,
        seed: cfg.seed,
        wall_time: start.elapsed().as_secs_f64(),
        final_loss,
        final_grad_norm: ws.grad_norm(),
        restarts: state.restarts,
    })
}

/// Iterate saved at a history point, used to restart after divergence.
struct Checkpoint<T: Scalar> {
    a: DMatrix<T>,
    tau: T,
    lr: T,
    t: usize,
    loss: T,
}

struct DescentState<T: Scalar> {
    a: DMatrix<T>,
    tau: T,
    lr: T,
    ckpt: Checkpoint<T>,
    restarts: usize,
    iterations: usize,
    history: Vec<(usize, T)>,
    ws: GradientWorkspace<T>,
}

impl<T: Scalar> DescentState<T> {
    fn new(init: FactorModel<T>, cfg: &SolverConfig, n: usize, d: usize, k: usize) -> Self {
        let a = init.factor().clone();
        let lr = T::lit(cfg.learning_rate);
        Self {
            ckpt: Checkpoint {
                a: a.clone(),
                tau: init.tau(),
                lr,
                t: 0,
                loss: T::lit(f64::INFINITY),
            },
            a,
            tau: init.tau(),
            lr,
            restarts: 0,
            iterations: 0,
            history: Vec::new(),
            ws: GradientWorkspace::new(n, d, k),
        }
    }

    /// Saves the current iterate if its loss is finite and no worse than
    /// the previous checkpoint's.
    fn checkpoint(&mut self, t: usize, loss: T) {
        if loss.is_finite_value() && loss <= self.ckpt.loss {
            self.ckpt.a.copy_from(&self.a);
            self.ckpt.tau = self.tau;
            self.ckpt.lr = self.lr;
            self.ckpt.t = t;
            self.ckpt.loss = loss;
        }
    }

    /// Restores the checkpoint with half its step size and returns its
    /// iteration index.
    fn recover(&mut self, iteration: usize, cfg: &SolverConfig) -> Result<usize> {
        if self.restarts >= cfg.max_restarts {
            return Err(Error::Diverged {
                iteration,
                restarts: self.restarts,
            });
        }
        self.restarts += 1;
        self.a.copy_from(&self.ckpt.a);
        self.tau = self.ckpt.tau;
        self.ckpt.lr *= T::lit(0.5);
        self.lr = self.ckpt.lr;
        Ok(self.ckpt.t)
    }

    fn step(&mut self) {
        let lr = self.lr;
        self.a.zip_apply(&self.ws.grad_a, |a, g| *a -= lr * g);
        self.tau -= self.lr * self.ws.grad_tau;
    }

    fn run_full(&mut self, ctx: &RiskContext<'_, T>, cfg: &SolverConfig) -> Result<()> {
        let decay = T::lit(cfg.decay);
        // A recorded loss above the checkpoint by more than this counts as divergence.
        let rise = T::lit(LOSS_RISE_TOL);
        let tol = T::lit(cfg.stop_tol);
        let mut t = 0;
        while t < cfg.max_iters {
            let record = t % cfg.history_stride == 0;
            let loss = ctx.gradient_into(&self.a, self.tau, &mut self.ws, record)?;
            let finite_loss = loss.is_none_or(|l| l.is_finite_value());
            if !finite_loss || !all_finite(&self.ws.grad_a) || !self.ws.grad_tau.is_finite_value() {
                t = self.recover(t, cfg)?;
                self.history.retain(|&(i, _)| i < t);
                continue;
            }
            if let Some(l) = loss {
                if l > self.ckpt.loss + rise {
                    t = self.recover(t, cfg)?;
                    self.history.retain(|&(i, _)| i < t);
                    continue;
                }
                self.history.push((t, l));
                self.checkpoint(t, l);
            }
            if self.ws.grad_norm() <= tol {
                break;
            }
            self.step();
            t += 1;
            if t % cfg.decay_every == 0 {
                self.lr *= decay;
            }
        }
        self.iterations = t;
        Ok(())
    }

    fn run_minibatch(&mut self, ctx: &RiskContext<'_, T>, cfg: &SolverConfig, batch: usize) -> Result<()> {
        let data = ctx.dataset();
        let n = data.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SHUFFLE_STREAM);
        let mut order: Vec<usize> = (0..n).collect();
        let decay = T::lit(cfg.decay);
        let tol = T::lit(cfg.stop_tol);
        let mut full_ws = GradientWorkspace::new(n, data.dim(), self.a.ncols());
        let mut t = 0;
        'epochs: while t < cfg.max_iters {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                if t >= cfg.max_iters {
                    break 'epochs;
                }
                if t % cfg.history_stride == 0 {
                    let full = ctx.loss_and_gradient_into(&self.a, self.tau, &mut full_ws)?;
                    if !full.is_finite_value() {
                        self.recover(t, cfg)?;
                        continue;
                    }
                    self.history.push((t, full));
                    self.checkpoint(t, full);
                    if full_ws.grad_norm() <= tol {
                        break 'epochs;
                    }
                }
                let sub = subset(data, chunk)?;
                let sub_ctx = RiskContext::new(&sub, *ctx.noise())?;
                let loss = sub_ctx.loss_and_gradient_into(&self.a, self.tau, &mut self.ws)?;
                if !loss.is_finite_value() || !all_finite(&self.ws.grad_a) {
                    self.recover(t, cfg)?;
                    continue;
                }
                self.step();
                t += 1;
            }
            self.lr *= decay;
        }
        self.iterations = t;
        Ok(())
    }
}

fn subset<T: Scalar>(data: &Dataset<T>, idx: &[usize]) -> Result<Dataset<T>> {
    let zs = data.zs().select_columns(idx);
    let labels = idx.iter().map(|&i| data.labels()[i]).collect();
    Dataset::new(zs, labels, None)
}

/// Accelerated projected gradient over `(M, τ)` with `M ⪰ 0`, `τ ≥ 0`.
///
/// Meant as an oracle for small problems; refuses `d > 32`. Uses
/// `cfg.max_iters` and `cfg.stop_tol` (on the gradient-mapping norm).
pub fn fit_projected<T: Scalar>(data: &Dataset<T>, noise: &NoiseSpec<T>, cfg: &SolverConfig) -> Result<MetricModel<T>> {
    cfg.validate()?;
    let d = data.dim();
    if d > PROJECTED_DIM_LIMIT {
        return Err(Error::TooLarge {
            dim: d,
            limit: PROJECTED_DIM_LIMIT,
        });
    }
    let ctx = RiskContext::new(data, *noise)?;
    let zero = T::zero();
    let half = T::lit(0.5);
    let project = |m: &DMatrix<T>, tau: T| -> Result<(DMatrix<T>, T)> { Ok((psd_project(&symmetrize(m))?, tau.max(zero))) };

    let mut x_m = DMatrix::zeros(d, d);
    let mut x_tau = zero;
    let mut y_m = x_m.clone();
    let mut y_tau = x_tau;
    let mut f_x = ctx.metric_loss_and_gradient(&x_m, x_tau)?.0;
    let mut momentum = T::one();
    let mut lip = T::one();
    let tol = T::lit(cfg.stop_tol);

    for _ in 0..cfg.max_iters {
        let (f_y, g_m, g_tau) = ctx.metric_loss_and_gradient(&y_m, y_tau)?;
        // Backtracking on the quadratic upper bound.
        let (n_m, n_tau, f_n) = loop {
            let step = T::one() / lip;
            let (cm, ct) = project(&(&y_m - &g_m * step), y_tau - g_tau * step)?;
            let f_c = ctx.metric_loss_and_gradient(&cm, ct)?.0;
            let dm = &cm - &y_m;
            let dt = ct - y_tau;
            let lin = g_m.dot(&dm) + g_tau * dt;
            let sq = dm.norm_squared() + dt * dt;
            if f_c <= f_y + lin + half * lip * sq + T::tol(1e-15) * f_y.abs() {
                break (cm, ct, f_c);
            }
            lip *= T::lit(2.0);
            if !lip.is_finite_value() {
                return Err(Error::Diverged {
                    iteration: 0,
                    restarts: 0,
                });
            }
        };
        let moved = ((&n_m - &x_m).norm_squared() + (n_tau - x_tau) * (n_tau - x_tau)).sqrt();
        if f_n > f_x {
            // Function-value restart.
            momentum = T::one();
            y_m.copy_from(&x_m);
            y_tau = x_tau;
            continue;
        }
        let next = (T::one() + (T::one() + T::lit(4.0) * momentum * momentum).sqrt()) * half;
        let beta = (momentum - T::one()) / next;
        y_m = &n_m + (&n_m - &x_m) * beta;
        y_tau = n_tau + (n_tau - x_tau) * beta;
        momentum = next;
        x_m = n_m;
        x_tau = n_tau;
        f_x = f_n;
        if moved * lip <= tol {
            break;
        }
        // Let the step grow back slowly.
        lip *= T::lit(0.9);
    }
    Ok(MetricModel::from_parts_unchecked(psd_project(&x_m)?, x_tau.max(zero)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = [
            SolverConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            SolverConfig {
                decay: 1.5,
                ..Default::default()
            },
            SolverConfig {
                max_iters: 0,
                ..Default::default()
            },
            SolverConfig {
                batch_size: Some(0),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let ds = Dataset::<f64>::empty(2);
        let noise = NoiseSpec::standard(crate::NoiseKind::Logistic);
        assert!(fit_factor(&ds, &noise, &SolverConfig::default()).is_err());
    }

    #[test]
    fn projected_guard() {
        let ds = Dataset::<f64>::empty(33);
        let noise = NoiseSpec::standard(crate::NoiseKind::Logistic);
        assert!(matches!(
            fit_projected(&ds, &noise, &SolverConfig::default()),
            Err(Error::TooLarge { dim: 33, limit: 32 })
        ));
    }
}
