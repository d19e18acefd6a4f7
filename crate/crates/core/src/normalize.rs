//! Linear preprocessing `z′ = U·z` of pair differences.
//!
//! Models fitted on transformed data map back with
//! [`pull_back`](crate::model::pull_back), `M = UᵀM′U`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt_pair;
use crate::model::Dataset;
use crate::scalar::{stable_sum, Scalar};

/// Relative eigenvalue floor below which whitening treats a direction as
/// having no variance.
pub const WHITEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    /// Divide each coordinate by its standard deviation.
    Standardize,
    /// Multiply by the pseudo-inverse square root of the covariance.
    Whiten,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "standardize" => Ok(Self::Standardize),
            "whiten" => Ok(Self::Whiten),
            other => Err(Error::Domain(format!("unknown normalization `{other}`"))),
        }
    }
}

fn column_means<T: Scalar>(zs: &DMatrix<T>) -> DVector<T> {
    let n = T::lit(zs.ncols().max(1) as f64);
    DVector::from_iterator(zs.nrows(), zs.row_iter().map(|r| stable_sum(r.iter().copied()) / n))
}

/// Sample covariance of the columns of `zs`.
pub fn covariance<T: Scalar>(zs: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = zs.ncols();
    if n < 2 {
        return Err(Error::Empty("covariance needs at least two samples"));
    }
    let mean = column_means(zs);
    let centered = DMatrix::from_fn(zs.nrows(), n, |i, j| zs[(i, j)] - mean[i]);
    Ok(&centered * centered.transpose() / T::lit((n - 1) as f64))
}

/// The map `U` for `mode`, estimated from `data`.
pub fn transform_matrix<T: Scalar>(data: &Dataset<T>, mode: Normalization) -> Result<DMatrix<T>> {
    let d = data.dim();
    match mode {
        Normalization::None => Ok(DMatrix::identity(d, d)),
        Normalization::Standardize => {
            let cov = covariance(data.zs())?;
            Ok(DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                (0..d).map(|i| {
                    let sd = cov[(i, i)].sqrt();
                    if sd > T::zero() {
                        T::one() / sd
                    } else {
                        T::one()
                    }
                }),
            )))
        }
        Normalization::Whiten => {
            let cov = covariance(data.zs())?;
            Ok(psd_sqrt_pair(&cov, T::lit(WHITEN_FLOOR))?.1)
        }
    }
}

/// Transformed copy of `data` together with `U`.
pub fn normalize<T: Scalar>(data: &Dataset<T>, mode: Normalization) -> Result<(Dataset<T>, DMatrix<T>)> {
    let u = transform_matrix(data, mode)?;
    Ok((data.transformed(&u)?, u))
}
