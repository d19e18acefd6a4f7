//! Maximum-likelihood learning of a Mahalanobis metric `(M, τ)` from pairs
//! labeled Close/Far under symmetric label noise.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below fix the precision.

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod normalize;
pub mod risk;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    factor_to_metric, l1f_distance_mc, model_distance, pull_back, relative_errors, truncate_factor,
    truncate_metric, unit_change, Dataset, FactorModel, Hypothesis, Label, LabeledPair, MetricModel,
};
pub use noise::{NoiseConstants, NoiseKind, NoiseSpec};
pub use normalize::Normalization;
pub use risk::{convexity_probe, true_risk_mc, RiskContext};
pub use scalar::Scalar;
pub use solver::{fit_factor, fit_projected, FitResult, SolverConfig};

pub type MetricModel64 = MetricModel<f64>;
pub type MetricModel32 = MetricModel<f32>;
pub type FactorModel64 = FactorModel<f64>;
pub type FactorModel32 = FactorModel<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type NoiseSpec64 = NoiseSpec<f64>;
pub type NoiseSpec32 = NoiseSpec<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
