//! Dense symmetric linear algebra on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEigen<T: Scalar> {
    pub values: DVector<T>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: DMatrix<T>,
}

impl<T: Scalar> SymEigen<T> {
    /// `V·diag(f(λ))·Vᵀ`.
    pub fn recompose<F: Fn(T) -> T>(&self, f: F) -> DMatrix<T> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        self.recompose(|x| x)
    }
}

pub fn max_asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn check_square<T: Scalar>(m: &DMatrix<T>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    Ok(())
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
///
/// Rejects inputs whose asymmetry exceeds `1e-10·max(1, max|mᵢⱼ|)`.
pub fn sym_eigendecomp<T: Scalar>(m: &DMatrix<T>) -> Result<SymEigen<T>> {
    check_square(m)?;
    let scale = m.amax().max(T::one());
    let asym = max_asymmetry(m);
    if asym > T::tol(1e-10) * scale {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Spectral norm of a symmetric matrix, `max |λᵢ|`.
pub fn sym_spectral_norm<T: Scalar>(m: &DMatrix<T>) -> Result<T> {
    if m.is_empty() {
        return Ok(T::zero());
    }
    let eig = sym_eigendecomp(m)?;
    Ok(eig.values.iter().fold(T::zero(), |acc, &x| acc.max(x.abs())))
}

/// Euclidean projection onto the PSD cone (negative eigenvalues clipped).
pub fn psd_project<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let eig = sym_eigendecomp(m)?;
    Ok(eig.recompose(|x| x.max(T::zero())))
}

/// Symmetric square root and pseudo-inverse square root of a PSD matrix.
///
/// Eigenvalues at or below `rel_floor·λ_max` are treated as zero in both.
pub fn psd_sqrt_pair<T: Scalar>(m: &DMatrix<T>, rel_floor: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let eig = sym_eigendecomp(m)?;
    let top = eig.values.iter().fold(T::zero(), |a, &x| a.max(x));
    let cut = rel_floor * top;
    let root = eig.recompose(|x| if x > cut { x.sqrt() } else { T::zero() });
    let inv_root = eig.recompose(|x| if x > cut { T::one() / x.sqrt() } else { T::zero() });
    Ok((root, inv_root))
}

/// 2-norm condition number `σ_max/σ_min`; infinite for singular input.
pub fn condition_number<T: Scalar>(u: &DMatrix<T>) -> Result<T> {
    check_square(u)?;
    let sv = u.clone().singular_values();
    let hi = sv.iter().fold(T::zero(), |a, &x| a.max(x));
    let lo = sv.iter().fold(hi, |a, &x| a.min(x));
    if lo <= T::zero() {
        return Ok(T::lit(f64::INFINITY));
    }
    Ok(hi / lo)
}
