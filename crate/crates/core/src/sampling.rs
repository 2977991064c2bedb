//! Zero-mean Gaussian sampling.
//!
//! Draws are `X = Z Lᵀ` with `Σ = L Lᵀ` the Cholesky factor and `Z` filled
//! row by row with `rand_distr::StandardNormal` (ziggurat) draws in `f64`.
//! Pipelines seed the generator with `ChaCha8Rng`, so a port reproducing the
//! same stream needs ChaCha8 and the same normal transform.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

/// n draws from N_p(0, Σ) as an n×p matrix.
pub fn sample_gaussian<T: Scalar, R: Rng + ?Sized>(
    covariance: &Matrix<T>,
    n: usize,
    rng: &mut R,
) -> Result<Matrix<T>> {
    let p = linalg::check_square(covariance, "covariance")?;
    let chol = linalg::cholesky(covariance).ok_or(Error::NotPositiveDefinite("sampling covariance"))?;
    let l = chol.l();
    let mut z = DMatrix::<T>::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            let v: f64 = rng.sample(StandardNormal);
            z[(r, c)] = T::lit(v);
        }
    }
    Ok(z * l.transpose())
}
