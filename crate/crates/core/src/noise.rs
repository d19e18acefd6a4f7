//! Symmetric label-noise families and their log-CDF losses.
//!
//! Every family is parameterized by a scale `s > 0`; all functions evaluate
//! the standard (`s = 1`) kernel at `a / s`. The loss of a pair with signed
//! margin `a` is `-log Φ(a)`, which is convex and nonincreasing for every
//! family here.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Logistic,
    Normal,
    Laplace,
    HyperbolicSecant,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::Logistic,
        NoiseKind::Normal,
        NoiseKind::Laplace,
        NoiseKind::HyperbolicSecant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Logistic => "logistic",
            NoiseKind::Normal => "normal",
            NoiseKind::Laplace => "laplace",
            NoiseKind::HyperbolicSecant => "hyperbolic_secant",
        }
    }

    /// Standard deviation of the unit-scale distribution.
    pub fn unit_std(self) -> f64 {
        match self {
            NoiseKind::Logistic => std::f64::consts::PI / 3f64.sqrt(),
            NoiseKind::Normal => 1.0,
            NoiseKind::Laplace => std::f64::consts::SQRT_2,
            NoiseKind::HyperbolicSecant => 1.0,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "logistic" => Ok(NoiseKind::Logistic),
            "normal" | "gaussian" | "probit" => Ok(NoiseKind::Normal),
            "laplace" => Ok(NoiseKind::Laplace),
            "hs" | "hyperbolic_secant" | "hyperbolicsecant" => Ok(NoiseKind::HyperbolicSecant),
            other => Err(Error::Domain(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// A noise family together with its scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<T> {
    kind: NoiseKind,
    scale: T,
}

/// Lipschitz bound `zeta` of `log Φ`, loss ceiling `big_t = -log Φ(-βF)` and
/// density floor `omega = pdf(βF)` on `[-βF, βF]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConstants<T> {
    pub zeta: T,
    pub big_t: T,
    pub omega: T,
}

impl<T: Scalar> NoiseSpec<T> {
    pub fn new(kind: NoiseKind, scale: T) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite_value() {
            return Err(Error::Domain(format!("noise scale must be positive, got {scale}")));
        }
        Ok(Self { kind, scale })
    }

    pub fn standard(kind: NoiseKind) -> Self {
        Self {
            kind,
            scale: T::one(),
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// `log Φ(a / s)`; finite for every finite `a`.
    pub fn log_cdf(&self, a: T) -> Result<T> {
        check_finite(a)?;
        Ok(-self.nll(a))
    }

    /// `d/da [-log Φ(a / s)]`, always negative.
    pub fn neg_log_cdf_deriv(&self, a: T) -> Result<T> {
        check_finite(a)?;
        Ok(self.nll_and_slope(a).1)
    }

    pub fn pdf(&self, a: T) -> T {
        let x = a / self.scale;
        let p = match self.kind {
            NoiseKind::Logistic => {
                let e = (-x.abs()).exp();
                e / ((T::one() + e) * (T::one() + e))
            }
            NoiseKind::Normal => T::lit(normal::pdf(x.as_f64())),
            NoiseKind::Laplace => T::lit(0.5) * (-x.abs()).exp(),
            NoiseKind::HyperbolicSecant => {
                let u = (-T::frac_pi_2() * x.abs()).exp();
                u / (T::one() + u * u)
            }
        };
        p / self.scale
    }

    pub fn cdf(&self, a: T) -> T {
        let x = a / self.scale;
        match self.kind {
            NoiseKind::Logistic => {
                let e = (-x.abs()).exp();
                if x >= T::zero() {
                    T::one() / (T::one() + e)
                } else {
                    e / (T::one() + e)
                }
            }
            NoiseKind::Normal => T::lit(normal::cdf(x.as_f64())),
            NoiseKind::Laplace => {
                let h = T::lit(0.5) * (-x.abs()).exp();
                if x <= T::zero() {
                    h
                } else {
                    T::one() - h
                }
            }
            NoiseKind::HyperbolicSecant => {
                let tail = T::frac_2_pi() * (-T::frac_pi_2() * x.abs()).exp().atan();
                if x <= T::zero() {
                    tail
                } else {
                    T::one() - tail
                }
            }
        }
    }

    /// Inverse CDF for `u` in the open unit interval.
    pub fn quantile(&self, u: T) -> Result<T> {
        if !(u > T::zero() && u < T::one()) {
            return Err(Error::Domain(format!("quantile needs u in (0, 1), got {u}")));
        }
        let x = match self.kind {
            NoiseKind::Logistic => u.ln() - (-u).ln_1p(),
            NoiseKind::Normal => T::lit(normal::quantile(u.as_f64())),
            NoiseKind::Laplace => {
                if u < T::lit(0.5) {
                    (u + u).ln()
                } else {
                    -T::ln_2() - (-u).ln_1p()
                }
            }
            NoiseKind::HyperbolicSecant => T::frac_2_pi() * (T::frac_pi_2() * u).tan().ln(),
        };
        Ok(x * self.scale)
    }

    /// `n` i.i.d. draws. Inverse-CDF for the closed-form families, the
    /// standard normal transform for `Normal`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<T> {
        let s = self.scale.as_f64();
        (0..n)
            .map(|_| {
                let x = match self.kind {
                    NoiseKind::Normal => {
                        let z: f64 = StandardNormal.sample(rng);
                        z
                    }
                    kind => {
                        let u: f64 = Open01.sample(rng);
                        unit_quantile_f64(kind, u)
                    }
                };
                T::lit(x * s)
            })
            .collect()
    }

    pub fn constants(&self, beta_f: T) -> Result<NoiseConstants<T>> {
        if !(beta_f > T::zero()) || !beta_f.is_finite_value() {
            return Err(Error::Domain(format!("betaF must be positive, got {beta_f}")));
        }
        let (loss, slope) = self.nll_and_slope(-beta_f);
        let zeta = match self.kind {
            NoiseKind::Logistic | NoiseKind::Laplace => T::one() / self.scale,
            NoiseKind::HyperbolicSecant => T::frac_pi_2() / self.scale,
            NoiseKind::Normal => -slope,
        };
        Ok(NoiseConstants {
            zeta,
            big_t: loss,
            omega: self.pdf(beta_f),
        })
    }

    /// `-log Φ(a / s)` without input validation.
    #[inline]
    pub fn nll(&self, a: T) -> T {
        self.nll_and_slope(a).0
    }

    /// `d/da[-log Φ(a/s)]` without input validation or the loss value.
    #[inline]
    pub fn slope(&self, a: T) -> T {
        let x = a / self.scale;
        let g = match self.kind {
            NoiseKind::Logistic => logistic_slope(x),
            NoiseKind::Laplace => laplace_slope(x),
            NoiseKind::HyperbolicSecant => hs_nll(x).1,
            NoiseKind::Normal => T::lit(normal::nll_and_slope(x.as_f64()).1),
        };
        g / self.scale
    }

    /// `(-log Φ(a/s), d/da[-log Φ(a/s)])` from one set of transcendental calls.
    #[inline]
    pub fn nll_and_slope(&self, a: T) -> (T, T) {
        let x = a / self.scale;
        let (v, g) = match self.kind {
            NoiseKind::Logistic => logistic_nll(x),
            NoiseKind::Laplace => laplace_nll(x),
            NoiseKind::HyperbolicSecant => hs_nll(x),
            NoiseKind::Normal => {
                let (v, g) = normal::nll_and_slope(x.as_f64());
                (T::lit(v), T::lit(g))
            }
        };
        (v, g / self.scale)
    }
}

fn check_finite<T: Scalar>(a: T) -> Result<()> {
    if a.is_finite_value() {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite argument {a}")))
    }
}

#[inline]
fn logistic_nll<T: Scalar>(x: T) -> (T, T) {
    // -log σ(x) = softplus(-x)
    let e = (-x.abs()).exp();
    let one = T::one();
    if x >= T::zero() {
        (e.ln_1p(), -e / (one + e))
    } else {
        (e.ln_1p() - x, -one / (one + e))
    }
}

#[inline]
fn logistic_slope<T: Scalar>(x: T) -> T {
    let e = (-x.abs()).exp();
    if x >= T::zero() {
        -e / (T::one() + e)
    } else {
        -T::one() / (T::one() + e)
    }
}

#[inline]
fn laplace_slope<T: Scalar>(x: T) -> T {
    if x <= T::zero() {
        -T::one()
    } else {
        let e = (-x).exp();
        -e / (T::lit(2.0) - e)
    }
}

#[inline]
fn laplace_nll<T: Scalar>(x: T) -> (T, T) {
    if x <= T::zero() {
        (T::ln_2() - x, -T::one())
    } else {
        let e = (-x).exp();
        (-(-T::lit(0.5) * e).ln_1p(), -e / (T::lit(2.0) - e))
    }
}

#[inline]
fn hs_nll<T: Scalar>(x: T) -> (T, T) {
    let one = T::one();
    let y = T::frac_pi_2() * x;
    if x <= T::zero() {
        // Φ = (2/π)·atan(t), t = e^y ≤ 1; keep atan(t)/t separate so that
        // log Φ ≈ log(2/π) + y stays exact once t underflows.
        let t = y.exp();
        let r = if t > T::zero() { t.atan() / t } else { one };
        let log_phi = T::frac_2_pi().ln() + y + r.ln();
        (-log_phi, -T::frac_pi_2() / (r * (one + t * t)))
    } else {
        let u = (-y).exp();
        let tail = T::frac_2_pi() * u.atan();
        let pdf = u / (one + u * u);
        (-(-tail).ln_1p(), -pdf / (one - tail))
    }
}

fn unit_quantile_f64(kind: NoiseKind, u: f64) -> f64 {
    use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, LN_2};
    match kind {
        NoiseKind::Logistic => u.ln() - (-u).ln_1p(),
        NoiseKind::Normal => normal::quantile(u),
        NoiseKind::Laplace => {
            if u < 0.5 {
                (2.0 * u).ln()
            } else {
                -LN_2 - (-u).ln_1p()
            }
        }
        NoiseKind::HyperbolicSecant => FRAC_2_PI * (FRAC_PI_2 * u).tan().ln(),
    }
}

/// Standard normal special functions in double precision.
pub(crate) mod normal {
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
    /// Below `-MILLS_SWITCH` the Mills ratio comes from its continued fraction.
    const MILLS_SWITCH: f64 = 8.0;

    pub fn pdf(x: f64) -> f64 {
        (-0.5 * x * x - LN_SQRT_2PI).exp()
    }

    /// Upper tail `1 - Φ(t)`.
    pub fn upper_tail(t: f64) -> f64 {
        0.5 * libm::erfc(t * FRAC_1_SQRT_2)
    }

    pub fn cdf(x: f64) -> f64 {
        upper_tail(-x)
    }

    /// Mills ratio `(1 - Φ(t)) / φ(t)` for `t ≥ 0`.
    pub fn mills_ratio(t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        if t < MILLS_SWITCH {
            return upper_tail(t) / pdf(t);
        }
        // Modified Lentz on t + 1/(t + 2/(t + 3/(t + ...))).
        let tiny = 1e-300;
        let mut f = t;
        let mut c = t;
        let mut d = 0.0;
        for n in 1..500 {
            let a = n as f64;
            d = t + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            d = 1.0 / d;
            c = t + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 / f
    }

    pub fn log_cdf(x: f64) -> f64 {
        if x >= 0.0 {
            (-upper_tail(x)).ln_1p()
        } else if -x < MILLS_SWITCH {
            upper_tail(-x).ln()
        } else {
            let t = -x;
            -0.5 * t * t - LN_SQRT_2PI + mills_ratio(t).ln()
        }
    }

    pub fn nll_and_slope(x: f64) -> (f64, f64) {
        let v = -log_cdf(x);
        let g = if x >= 0.0 {
            -pdf(x) / (1.0 - upper_tail(x))
        } else {
            -1.0 / mills_ratio(-x)
        };
        (v, g)
    }

    /// Acklam's rational approximation refined by one Halley step.
    pub fn quantile(p: f64) -> f64 {
        const A: [f64; 6] = [
            -3.969_683_028_665_376e1,
            2.209_460_984_245_205e2,
            -2.759_285_104_469_687e2,
            1.383_577_518_672_69e2,
            -3.066_479_806_614_716e1,
            2.506_628_277_459_239,
        ];
        const B: [f64; 5] = [
            -5.447_609_879_822_406e1,
            1.615_858_368_580_409e2,
            -1.556_989_798_598_866e2,
            6.680_131_188_771_972e1,
            -1.328_068_155_288_572e1,
        ];
        const C: [f64; 6] = [
            -7.784_894_002_430_293e-3,
            -3.223_964_580_411_365e-1,
            -2.400_758_277_161_838,
            -2.549_732_539_343_734,
            4.374_664_141_464_968,
            2.938_163_982_698_783,
        ];
        const D: [f64; 4] = [
            7.784_695_709_041_462e-3,
            3.224_671_290_700_398e-1,
            2.445_134_137_142_996,
            3.754_408_661_907_416,
        ];
        const P_LOW: f64 = 0.02425;
        let x = if p < P_LOW {
            let q = (-2.0 * p.ln()).sqrt();
            (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        } else if p <= 1.0 - P_LOW {
            let q = p - 0.5;
            let r = q * q;
            (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
                / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
        } else {
            let q = (-2.0 * (-p).ln_1p()).sqrt();
            -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        };
        // Refine against whichever tail is computed more accurately.
        let e = if x < 0.0 {
            cdf(x) - p
        } else {
            (1.0 - p) - upper_tail(x)
        };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x - u / (1.0 + 0.5 * x * u)
    }
}
