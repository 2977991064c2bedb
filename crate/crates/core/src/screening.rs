//! Candidate-edge prescreening and the two baselines: the graphical lasso
//! and Bonferroni-corrected partial-correlation testing.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use crate::covariance::{empirical_covariance, CovarianceEstimate};
use crate::error::{Error, Result};
use crate::graph_model::{num_slots, EdgeList, SparsityPattern};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoConfig {
    /// Largest entrywise change of W in a sweep that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GlassoConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoFit<T: Scalar> {
    pub theta: Matrix<T>,
    pub lambda: T,
    pub iterations: usize,
    pub converged: bool,
    pub dual_gap: T,
    /// Estimated covariance, kept for warm starts.
    pub w: Matrix<T>,
    /// Column j holds the row-j lasso coefficients (entry j unused).
    pub beta: Matrix<T>,
}

impl<T: Scalar> GlassoFit<T> {
    pub fn support(&self) -> SparsityPattern {
        SparsityPattern::from_support(&self.theta, T::zero())
    }

    pub fn objective(&self, cov: &Matrix<T>) -> Result<T> {
        glasso_objective(&self.theta, cov, self.lambda)
    }
}

/// −log det Θ + tr(Σ̂Θ) + λ·Σ_{i≠j}|θ_ij|.
pub fn glasso_objective<T: Scalar>(theta: &Matrix<T>, cov: &Matrix<T>, lambda: T) -> Result<T> {
    Ok(-linalg::log_det(theta)? + linalg::trace_product(theta, cov) + lambda * off_diagonal_l1(theta))
}

fn off_diagonal_l1<T: Scalar>(a: &Matrix<T>) -> T {
    let mut acc = T::zero();
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j {
                acc += a[(i, j)].abs();
            }
        }
    }
    acc
}

fn soft<T: Scalar>(x: T, t: T) -> T {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        T::zero()
    }
}

/// Graphical lasso by block coordinate descent over rows, each row a lasso
/// solved by cyclic coordinate descent. Only off-diagonal entries are
/// penalized, so the diagonal of W stays at Σ̂'s. `warm` reuses W and the
/// row coefficients of an earlier fit (typically at a nearby λ).
pub fn glasso_fit<T: Scalar>(
    cov: &CovarianceEstimate<T>,
    lambda: T,
    cfg: &GlassoConfig,
    warm: Option<&GlassoFit<T>>,
) -> Result<GlassoFit<T>> {
    let s = &cov.matrix;
    let p = linalg::check_square(s, "covariance")?;
    linalg::check_finite(s)?;
    if !(lambda >= T::zero()) {
        return Err(Error::Config(format!("glasso penalty must be nonnegative, got {lambda}")));
    }
    if (0..p).any(|i| !(s[(i, i)] > T::zero())) {
        return Err(Error::InvalidInput("covariance diagonal must be positive".into()));
    }
    if cfg.max_iter == 0 || !(cfg.tol > 0.0) {
        return Err(Error::Config("glasso needs max_iter ≥ 1 and tol > 0".into()));
    }

    let (mut w, mut beta) = match warm {
        Some(f) if f.w.shape() == (p, p) => {
            let mut w = f.w.clone();
            for i in 0..p {
                w[(i, i)] = s[(i, i)];
            }
            (w, f.beta.clone())
        }
        _ => (s.clone(), DMatrix::zeros(p, p)),
    };

    let tol = T::lit(cfg.tol);
    let inner_tol = T::lit(cfg.tol * 0.1);
    let inner_max = 1000;
    let mut g = vec![T::zero(); p];
    let mut iterations = 0;
    let mut converged = p < 2;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let mut max_change = T::zero();
        for j in 0..p {
            // g = W₁₁ β for the current coefficients.
            for k in 0..p {
                g[k] = T::zero();
            }
            for l in 0..p {
                let b = beta[(l, j)];
                if l != j && b != T::zero() {
                    for k in 0..p {
                        g[k] += w[(k, l)] * b;
                    }
                }
            }
            for _ in 0..inner_max {
                let mut delta = T::zero();
                for k in 0..p {
                    if k == j {
                        continue;
                    }
                    let wkk = w[(k, k)];
                    let old = beta[(k, j)];
                    let r = s[(k, j)] - (g[k] - wkk * old);
                    let new = soft(r, lambda) / wkk;
                    if new != old {
                        let d = new - old;
                        beta[(k, j)] = new;
                        for l in 0..p {
                            g[l] += w[(l, k)] * d;
                        }
                        delta = delta.max((d * wkk).abs());
                    }
                }
                if delta < inner_tol {
                    break;
                }
            }
            for k in 0..p {
                if k != j {
                    let change = (w[(k, j)] - g[k]).abs();
                    max_change = max_change.max(change);
                    w[(k, j)] = g[k];
                    w[(j, k)] = g[k];
                }
            }
        }
        converged = max_change < tol;
    }
    if !converged {
        log::warn!("glasso at λ = {lambda} stopped after {iterations} sweeps without converging");
    }

    let theta = precision_from_blocks(&w, &beta);
    let dual_gap = linalg::trace_product(s, &theta) + lambda * off_diagonal_l1(&theta) - T::count(p);
    Ok(GlassoFit { theta, lambda, iterations, converged, dual_gap, w, beta })
}

/// θ_jj = 1/(w_jj − w₁₂ᵀβ), θ₁₂ = −β θ_jj, column by column, then symmetrized.
fn precision_from_blocks<T: Scalar>(w: &Matrix<T>, beta: &Matrix<T>) -> Matrix<T> {
    let p = w.nrows();
    let mut theta = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut dot = T::zero();
        for k in 0..p {
            if k != j {
                dot += w[(k, j)] * beta[(k, j)];
            }
        }
        let tjj = T::one() / (w[(j, j)] - dot);
        theta[(j, j)] = tjj;
        for k in 0..p {
            if k != j {
                theta[(k, j)] = -beta[(k, j)] * tjj;
            }
        }
    }
    linalg::symmetrize(&mut theta);
    theta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoPathPoint {
    pub lambda: f64,
    pub edges: usize,
    pub objective: f64,
    pub converged: bool,
}

/// Fits along `lambdas` in the given order, warm-starting each from the last.
pub fn glasso_path<T: Scalar>(
    cov: &CovarianceEstimate<T>,
    lambdas: &[T],
    cfg: &GlassoConfig,
) -> Result<Vec<(GlassoPathPoint, GlassoFit<T>)>> {
    let mut out: Vec<(GlassoPathPoint, GlassoFit<T>)> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let fit = glasso_fit(cov, lambda, cfg, out.last().map(|(_, f)| f))?;
        let point = GlassoPathPoint {
            lambda: lambda.as_f64(),
            edges: fit.support().count(),
            objective: fit.objective(&cov.matrix).map(|v| v.as_f64()).unwrap_or(f64::NAN),
            converged: fit.converged,
        };
        out.push((point, fit));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScreenMethod {
    Glasso { lambda: f64 },
    CorrThreshold { tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenResult {
    /// Candidate slots in increasing order.
    pub candidates: Vec<usize>,
    pub method: ScreenMethod,
    pub count: usize,
}

/// λ = 0.1·max|σ̂_ij|, small enough to keep weak true edges.
pub fn default_prescreen_lambda<T: Scalar>(cov: &CovarianceEstimate<T>) -> f64 {
    0.1 * cov.max_abs_off_diagonal().as_f64()
}

pub fn default_max_candidates(p: usize) -> usize {
    3 * p
}

/// Builds the candidate edge set from the first subsample. When more than
/// `max_candidates` slots qualify, the strongest by |partial correlation|
/// (glasso) or |correlation| are kept.
pub fn prescreen<T: Scalar>(data: &Matrix<T>, method: ScreenMethod, max_candidates: Option<usize>) -> Result<ScreenResult> {
    let cov = empirical_covariance(data)?;
    prescreen_covariance(&cov, method, max_candidates)
}

pub fn prescreen_covariance<T: Scalar>(
    cov: &CovarianceEstimate<T>,
    method: ScreenMethod,
    max_candidates: Option<usize>,
) -> Result<ScreenResult> {
    let p = cov.p();
    let edges = EdgeList::new(p);
    let mut scored: Vec<(usize, f64)> = match method {
        ScreenMethod::Glasso { lambda } => {
            let fit = glasso_fit(cov, T::lit(lambda), &GlassoConfig::default(), None)?;
            let t = &fit.theta;
            (0..num_slots(p))
                .filter_map(|k| {
                    let (i, j) = edges.pair(k);
                    (t[(i, j)] != T::zero())
                        .then(|| (k, (t[(i, j)] / (t[(i, i)] * t[(j, j)]).sqrt()).abs().as_f64()))
                })
                .collect()
        }
        ScreenMethod::CorrThreshold { tau } => {
            let s = &cov.matrix;
            (0..num_slots(p))
                .filter_map(|k| {
                    let (i, j) = edges.pair(k);
                    let denom = (s[(i, i)] * s[(j, j)]).sqrt();
                    let r = if denom > T::zero() { (s[(i, j)] / denom).abs().as_f64() } else { 0.0 };
                    (r >= tau).then_some((k, r))
                })
                .collect()
        }
    };
    if let Some(cap) = max_candidates {
        if scored.len() > cap {
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scored.truncate(cap);
        }
    }
    let mut candidates: Vec<usize> = scored.into_iter().map(|(k, _)| k).collect();
    candidates.sort_unstable();
    Ok(ScreenResult { count: candidates.len(), candidates, method })
}

#[derive(Debug, Clone)]
pub struct PcorTestResult {
    pub edges: SparsityPattern,
    /// Two-sided p-value per slot.
    pub p_values: Vec<f64>,
    /// Per-test level α / (p(p−1)/2).
    pub level: f64,
}

/// Full-order partial correlations from Σ̂⁻¹, Fisher z with variance
/// 1/(n − p − 1), two-sided, Bonferroni over all p(p−1)/2 pairs.
pub fn pcor_test<T: Scalar>(data: &Matrix<T>, alpha: f64) -> Result<PcorTestResult> {
    let (n, p) = data.shape();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("test level must lie in (0, 1), got {alpha}")));
    }
    if n <= p + 2 {
        return Err(Error::InvalidInput(format!(
            "partial-correlation testing needs n > p + 2 (n = {n}, p = {p})"
        )));
    }
    let cov = empirical_covariance(data)?;
    let theta = linalg::inverse_pd(&cov.matrix).map_err(|_| {
        Error::InvalidInput("sample covariance is singular; partial-correlation testing needs n > p and full-rank data".into())
    })?;
    let edges = EdgeList::new(p);
    let slots = num_slots(p);
    let level = alpha / slots.max(1) as f64;
    let scale = ((n - p - 1) as f64).sqrt();
    let mut pattern = SparsityPattern::empty(p);
    let mut p_values = Vec::with_capacity(slots);
    for k in 0..slots {
        let (i, j) = edges.pair(k);
        let rho = (-theta[(i, j)] / (theta[(i, i)] * theta[(j, j)]).sqrt()).as_f64();
        let z = rho.clamp(-1.0 + 1e-16, 1.0 - 1e-16).atanh() * scale;
        let pv = erfc(z.abs() / std::f64::consts::SQRT_2);
        if pv < level {
            pattern.set(k, true);
        }
        p_values.push(pv);
    }
    Ok(PcorTestResult { edges: pattern, p_values, level })
}
