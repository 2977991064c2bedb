//! Dense symmetric-matrix helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Matrix<T> = DMatrix<T>;

pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Cholesky<T, Dyn>> {
    Cholesky::new(a.clone())
}

pub fn is_positive_definite<T: Scalar>(a: &Matrix<T>) -> bool {
    a.is_square() && cholesky(a).is_some()
}

/// log det of a positive-definite matrix from its Cholesky factor.
pub fn log_det<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    let chol = cholesky(a).ok_or(Error::NotPositiveDefinite("log-determinant"))?;
    Ok(log_det_from_cholesky(&chol))
}

pub fn log_det_from_cholesky<T: Scalar>(chol: &Cholesky<T, Dyn>) -> T {
    let l = chol.l_dirty();
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    acc + acc
}

/// Inverse of a positive-definite matrix, symmetrized.
/// Diagonal input is inverted entrywise, so it round-trips exactly.
pub fn inverse_pd<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.nrows();
    if a.is_square() && (0..n).all(|j| (0..n).all(|i| i == j || a[(i, j)] == T::zero())) {
        if (0..n).any(|i| !(a[(i, i)] > T::zero())) {
            return Err(Error::NotPositiveDefinite("inverse"));
        }
        return Ok(Matrix::from_fn(n, n, |i, j| if i == j { T::one() / a[(i, i)] } else { T::zero() }));
    }
    let chol = cholesky(a).ok_or(Error::NotPositiveDefinite("inverse"))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// tr(AB) without forming the product.
pub fn trace_product<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    debug_assert_eq!(a.shape(), b.shape());
    let (n, m) = a.shape();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..m {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Overwrites `a` with (A + Aᵀ)/2.
pub fn symmetrize<T: Scalar>(a: &mut Matrix<T>) {
    let n = a.nrows();
    let half = T::lit(0.5);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = (a[(i, j)] + a[(j, i)]) * half;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn min_eigenvalue<T: Scalar>(a: &Matrix<T>) -> T {
    let eig = SymmetricEigen::new(a.clone());
    eig.eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(|| T::lit(f64::MAX)), |m, v| {
            if v < m {
                v
            } else {
                m
            }
        })
}

/// Largest absolute eigenvalue of a symmetric matrix (spectral norm).
pub fn spectral_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let eig = SymmetricEigen::new(a.clone());
    eig.eigenvalues
        .iter()
        .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
}

pub fn max_abs_diff<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |m, (x, y)| {
            let d = (*x - *y).abs();
            if d > m {
                d
            } else {
                m
            }
        })
}

pub fn frobenius_distance<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    (a - b).norm()
}

pub(crate) fn check_square<T: Scalar>(a: &Matrix<T>, what: &str) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: format!("square {what}"),
            found: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    Ok(a.nrows())
}

pub(crate) fn check_finite<T: Scalar>(a: &Matrix<T>) -> Result<()> {
    match a.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_det_matches_product_of_eigenvalues() {
        let a = Matrix::<f64>::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let eig = SymmetricEigen::new(a.clone());
        let expected: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        assert_relative_eq!(log_det(&a).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn trace_product_matches_dense_product() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = Matrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 1.5]);
        assert_relative_eq!(trace_product(&a, &b), (&a * &b).trace(), epsilon = 1e-14);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(!is_positive_definite(&a));
        assert!(log_det(&a).is_err());
        assert!(min_eigenvalue(&a) < 0.0);
    }
}
