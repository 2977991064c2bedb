//! Empirical covariance, hard thresholding, and split-sample threshold selection.
//!
//! The data model is zero-mean, so nothing here centers columns. Real data
//! must be centered during ingestion.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceKind<T> {
    Empirical,
    Thresholded { gamma: T },
}

#[derive(Debug, Clone)]
pub struct CovarianceEstimate<T: Scalar> {
    pub matrix: Matrix<T>,
    pub n: usize,
    pub kind: CovarianceKind<T>,
}

impl<T: Scalar> CovarianceEstimate<T> {
    /// Wraps an existing symmetric matrix, e.g. a known population covariance.
    pub fn from_matrix(matrix: Matrix<T>, n: usize) -> Result<Self> {
        crate::linalg::check_square(&matrix, "covariance")?;
        Ok(Self { matrix, n, kind: CovarianceKind::Empirical })
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn gamma(&self) -> Option<T> {
        match self.kind {
            CovarianceKind::Thresholded { gamma } => Some(gamma),
            CovarianceKind::Empirical => None,
        }
    }

    pub fn max_abs_off_diagonal(&self) -> T {
        max_abs_off_diagonal(&self.matrix)
    }
}

fn max_abs_off_diagonal<T: Scalar>(a: &Matrix<T>) -> T {
    let p = a.nrows();
    let mut m = T::zero();
    for j in 0..p {
        for i in 0..p {
            if i != j && a[(i, j)].abs() > m {
                m = a[(i, j)].abs();
            }
        }
    }
    m
}

/// (1/n) XᵀX for an n×p data matrix, rows are samples.
pub fn empirical_covariance<T: Scalar>(x: &Matrix<T>) -> Result<CovarianceEstimate<T>> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput("empty data matrix".into()));
    }
    let scale = T::one() / T::count(n);
    let mut s = DMatrix::zeros(p, p);
    for j in 0..p {
        let xj = x.column(j);
        for i in 0..=j {
            let v = x.column(i).dot(&xj) * scale;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(CovarianceEstimate { matrix: s, n, kind: CovarianceKind::Empirical })
}

fn threshold_matrix<T: Scalar>(a: &Matrix<T>, gamma: T) -> Matrix<T> {
    let mut out = a.clone();
    let p = a.nrows();
    for j in 0..p {
        for i in 0..p {
            if i != j && a[(i, j)].abs() < gamma {
                out[(i, j)] = T::zero();
            }
        }
    }
    out
}

/// Zeroes off-diagonal entries with |σ_ij| < γ. The diagonal is never touched.
pub fn hard_threshold<T: Scalar>(
    cov: &CovarianceEstimate<T>,
    gamma: T,
) -> Result<CovarianceEstimate<T>> {
    if gamma < T::zero() || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!("threshold must be a finite value >= 0, got {gamma}")));
    }
    Ok(CovarianceEstimate {
        matrix: threshold_matrix(&cov.matrix, gamma),
        n: cov.n,
        kind: CovarianceKind::Thresholded { gamma },
    })
}

#[derive(Debug, Clone)]
pub struct ThresholdSelection<T> {
    pub gamma: T,
    pub repeats: usize,
    pub grid: Vec<T>,
    /// Mean squared-Frobenius criterion, aligned with `grid`.
    pub scores: Vec<T>,
    /// Sizes of the (fit, validation) pieces of each split.
    pub split_sizes: (usize, usize),
}

pub const DEFAULT_THRESHOLD_REPEATS: usize = 20;
pub const DEFAULT_GRID_POINTS: usize = 20;
pub const MIN_THRESHOLD_SAMPLES: usize = 8;

/// `points` evenly spaced values from 0 to the largest off-diagonal |σ_ij|.
pub fn default_threshold_grid<T: Scalar>(cov: &CovarianceEstimate<T>, points: usize) -> Vec<T> {
    let top = cov.max_abs_off_diagonal();
    match points {
        0 => Vec::new(),
        1 => vec![T::zero()],
        _ => (0..points)
            .map(|i| top * T::count(i) / T::count(points - 1))
            .collect(),
    }
}

/// Piece sizes floor(n(1 - 1/ln n)) and the remainder.
pub fn threshold_split_sizes(n: usize) -> Result<(usize, usize)> {
    if n < MIN_THRESHOLD_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "threshold selection needs at least {MIN_THRESHOLD_SAMPLES} samples, got {n}"
        )));
    }
    let nf = n as f64;
    let first = (nf * (1.0 - 1.0 / nf.ln())).floor() as usize;
    let second = n - first;
    if first == 0 || second == 0 {
        return Err(Error::InvalidInput(format!(
            "degenerate split ({first}, {second}) for n = {n}; need n >= {MIN_THRESHOLD_SAMPLES}"
        )));
    }
    Ok((first, second))
}

fn rows<T: Scalar>(x: &Matrix<T>, idx: &[usize]) -> Matrix<T> {
    x.select_rows(idx.iter())
}

/// Picks γ from `grid` minimizing the mean over `repeats` random splits of
/// ‖T_γ(Σ̂_fit) − Σ̂_val‖²_F. Ties go to the smallest γ.
pub fn select_threshold<T: Scalar, R: Rng + ?Sized>(
    data: &Matrix<T>,
    repeats: usize,
    grid: &[T],
    rng: &mut R,
) -> Result<ThresholdSelection<T>> {
    if repeats == 0 {
        return Err(Error::Config("threshold selection needs at least one split".into()));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty threshold grid".into()));
    }
    if let Some(g) = grid.iter().find(|g| **g < T::zero() || !g.is_finite()) {
        return Err(Error::InvalidInput(format!("bad grid value {g}")));
    }
    let n = data.nrows();
    let (n_fit, n_val) = threshold_split_sizes(n)?;

    let mut scores = vec![T::zero(); grid.len()];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..repeats {
        order.shuffle(rng);
        let fit = empirical_covariance(&rows(data, &order[..n_fit]))?.matrix;
        let val = empirical_covariance(&rows(data, &order[n_fit..]))?.matrix;
        for (score, &g) in scores.iter_mut().zip(grid) {
            let diff = threshold_matrix(&fit, g) - &val;
            *score += diff.norm_squared();
        }
    }
    let denom = T::count(repeats);
    for s in &mut scores {
        *s /= denom;
    }

    let mut best = 0;
    for k in 1..grid.len() {
        if scores[k] < scores[best] || (scores[k] == scores[best] && grid[k] < grid[best]) {
            best = k;
        }
    }
    Ok(ThresholdSelection {
        gamma: grid[best],
        repeats,
        grid: grid.to_vec(),
        scores,
        split_sizes: (n_fit, n_val),
    })
}
