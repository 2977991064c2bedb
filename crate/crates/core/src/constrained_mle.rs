//! Gaussian maximum likelihood with a prescribed zero pattern.
//!
//! Maximizes `log det Θ − tr(Σ̂Θ)` over positive-definite `Θ` with
//! `θ_ij = 0` for every off-pattern pair. The optimum is characterized by
//! `[Θ⁻¹]_ij = Σ̂_ij` on the pattern's edges and the diagonal.
//!
//! The solver is edgewise iterative proportional scaling: each step takes one
//! constraint block `C` (an edge `{i, j}` or a single vertex) and sets
//! `Θ ← Θ + E_C (Σ̂_CC⁻¹ − W_CC⁻¹) E_Cᵀ` where `W = Θ⁻¹`. That is the exact
//! block maximizer of the likelihood, so the objective never decreases, and
//! it only writes entries inside `C × C`, so off-pattern zeros stay exact.
//! `W` is carried along with a rank-two update and refreshed from a Cholesky
//! inverse after every sweep.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::graph_model::SparsityPattern;
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Max-norm tolerance on the stationarity residual.
    pub tol: T,
    /// Cap on full sweeps over the constraint set.
    pub max_iter: usize,
    /// Diagonal loading applied once when a working matrix loses definiteness.
    pub ridge: T,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-7), max_iter: 500, ridge: T::zero() }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::Config(format!("solver tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver max_iter must be >= 1".into()));
        }
        if self.ridge < T::zero() {
            return Err(Error::Config(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate<T: Scalar> {
    pub matrix: Matrix<T>,
    pub pattern: SparsityPattern,
    /// Sweeps performed; 0 for the closed-form empty and full patterns.
    pub iterations: usize,
    pub kkt_residual: T,
    pub converged: bool,
    /// Ridge actually added to the covariance (zero unless a restart happened).
    pub ridge_applied: T,
}

impl<T: Scalar> PrecisionEstimate<T> {
    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    /// log det Θ − tr(Σ̂Θ) against `cov`.
    pub fn objective(&self, cov: &Matrix<T>) -> Result<T> {
        objective(&self.matrix, cov)
    }
}

/// log det Θ − tr(SΘ); errors when Θ is not positive definite.
pub fn objective<T: Scalar>(theta: &Matrix<T>, cov: &Matrix<T>) -> Result<T> {
    Ok(linalg::log_det(theta)? - linalg::trace_product(cov, theta))
}

pub fn fit_constrained_mle<T: Scalar>(
    cov: &CovarianceEstimate<T>,
    pattern: &SparsityPattern,
    cfg: &SolverConfig<T>,
) -> Result<PrecisionEstimate<T>> {
    fit_constrained_mle_from(cov, pattern, cfg, None)
}

/// As [`fit_constrained_mle`], optionally warm-started from `start`.
///
/// Off-pattern entries of `start` are zeroed; if what remains is not
/// positive definite the usual diagonal start is used instead.
pub fn fit_constrained_mle_from<T: Scalar>(
    cov: &CovarianceEstimate<T>,
    pattern: &SparsityPattern,
    cfg: &SolverConfig<T>,
    start: Option<&Matrix<T>>,
) -> Result<PrecisionEstimate<T>> {
    cfg.validate()?;
    let s = &cov.matrix;
    let p = linalg::check_square(s, "covariance")?;
    if pattern.p() != p {
        return Err(Error::DimensionMismatch {
            expected: format!("pattern over p = {p}"),
            found: format!("p = {}", pattern.p()),
        });
    }
    linalg::check_finite(s)?;
    for i in 0..p {
        if !(s[(i, i)] > T::zero()) {
            return Err(Error::InvalidInput(format!(
                "covariance diagonal must be positive, entry {i} is {}",
                s[(i, i)]
            )));
        }
    }
    let asym = linalg::max_abs_diff(s, &s.transpose());
    if asym > T::default_epsilon().sqrt() * (T::one() + s.amax()) {
        return Err(Error::InvalidInput(format!("covariance is not symmetric (max asymmetry {asym})")));
    }

    match solve(s, pattern, cfg, start) {
        Ok(est) => Ok(est),
        Err(failure) if cfg.ridge > T::zero() => {
            log::warn!(
                "constrained MLE lost definiteness after {} sweeps; retrying with ridge {}",
                failure.iterations,
                cfg.ridge
            );
            let mut ridged = s.clone();
            for i in 0..p {
                ridged[(i, i)] += cfg.ridge;
            }
            solve(&ridged, pattern, cfg, None)
                .map(|mut est| {
                    est.ridge_applied = cfg.ridge;
                    est
                })
                .map_err(Failure::into_error)
        }
        Err(failure) => Err(failure.into_error()),
    }
}

struct Failure {
    iterations: usize,
    residual: f64,
}

impl Failure {
    fn into_error(self) -> Error {
        Error::NonConvergence { iterations: self.iterations, residual: self.residual }
    }
}

fn solve<T: Scalar>(
    s: &Matrix<T>,
    pattern: &SparsityPattern,
    cfg: &SolverConfig<T>,
    start: Option<&Matrix<T>>,
) -> std::result::Result<PrecisionEstimate<T>, Failure> {
    let p = s.nrows();
    let edges = pattern.edges();
    let done = |matrix: Matrix<T>, iterations: usize, kkt_residual: T, converged: bool| PrecisionEstimate {
        matrix,
        pattern: pattern.clone(),
        iterations,
        kkt_residual,
        converged,
        ridge_applied: T::zero(),
    };

    if edges.is_empty() {
        let theta = DMatrix::from_fn(p, p, |i, j| if i == j { T::one() / s[(i, i)] } else { T::zero() });
        return Ok(done(theta, 0, T::zero(), true));
    }
    if edges.len() == pattern.num_slots() {
        let theta = linalg::inverse_pd(s).map_err(|_| Failure { iterations: 0, residual: f64::INFINITY })?;
        let w = linalg::inverse_pd(&theta).map_err(|_| Failure { iterations: 0, residual: f64::INFINITY })?;
        let residual = constraint_residual(&w, s, &edges);
        return Ok(done(theta, 0, residual, residual < cfg.tol));
    }

    let mut theta = start
        .and_then(|m| masked_start(m, pattern))
        .unwrap_or_else(|| DMatrix::from_fn(p, p, |i, j| if i == j { T::one() / s[(i, i)] } else { T::zero() }));
    let mut w = linalg::inverse_pd(&theta).map_err(|_| Failure { iterations: 0, residual: f64::INFINITY })?;
    let mut residual = constraint_residual(&w, s, &edges);
    if residual < cfg.tol {
        return Ok(done(theta, 0, residual, true));
    }
    #[cfg(debug_assertions)]
    let mut last_objective = objective(&theta, s).ok();

    for sweep in 1..=cfg.max_iter {
        let fail = |residual: T| Failure { iterations: sweep, residual: residual.as_f64() };
        for &(i, j) in &edges {
            if !pair_update(&mut theta, &mut w, s, i, j) {
                return Err(fail(residual));
            }
        }
        for i in 0..p {
            if !vertex_update(&mut theta, &mut w, s, i) {
                return Err(fail(residual));
            }
        }
        w = linalg::inverse_pd(&theta).map_err(|_| fail(residual))?;
        residual = constraint_residual(&w, s, &edges);

        #[cfg(debug_assertions)]
        {
            let current = objective(&theta, s).ok();
            if let (Some(prev), Some(cur)) = (last_objective, current) {
                let slack = T::lit(1e-9) * (T::one() + prev.abs());
                debug_assert!(cur >= prev - slack, "IPS objective decreased: {prev} -> {cur}");
            }
            last_objective = current;
        }

        if residual < cfg.tol {
            return Ok(done(theta, sweep, residual, true));
        }
    }
    Ok(done(theta, cfg.max_iter, residual, false))
}

fn masked_start<T: Scalar>(start: &Matrix<T>, pattern: &SparsityPattern) -> Option<Matrix<T>> {
    let p = pattern.p();
    if start.shape() != (p, p) {
        return None;
    }
    let mut theta = start.clone();
    let mut k = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            if !pattern.get(k) {
                theta[(i, j)] = T::zero();
                theta[(j, i)] = T::zero();
            }
            k += 1;
        }
    }
    linalg::symmetrize(&mut theta);
    linalg::is_positive_definite(&theta).then_some(theta)
}

/// max |W_ij − S_ij| over the diagonal and the pattern's edges.
fn constraint_residual<T: Scalar>(w: &Matrix<T>, s: &Matrix<T>, edges: &[(usize, usize)]) -> T {
    let mut r = T::zero();
    for i in 0..s.nrows() {
        r = r.max((w[(i, i)] - s[(i, i)]).abs());
    }
    for &(i, j) in edges {
        r = r.max((w[(i, j)] - s[(i, j)]).abs());
    }
    r
}

/// Matches the {i, j} block of Θ⁻¹ to S. Returns false if either 2×2 block
/// is not positive definite.
fn pair_update<T: Scalar>(theta: &mut Matrix<T>, w: &mut Matrix<T>, s: &Matrix<T>, i: usize, j: usize) -> bool {
    let p = s.nrows();
    let (wii, wij, wjj) = (w[(i, i)], w[(i, j)], w[(j, j)]);
    let (sii, sij, sjj) = (s[(i, i)], s[(i, j)], s[(j, j)]);
    let det_w = wii * wjj - wij * wij;
    let det_s = sii * sjj - sij * sij;
    if !(det_w > T::zero()) || !(det_s > T::zero()) {
        return false;
    }
    // 2×2 inverses as (a, b, c) for [[a, b], [b, c]]
    let wi = (wjj / det_w, -wij / det_w, wii / det_w);
    let si = (sjj / det_s, -sij / det_s, sii / det_s);

    theta[(i, i)] += si.0 - wi.0;
    theta[(j, j)] += si.2 - wi.2;
    let d = si.1 - wi.1;
    theta[(i, j)] += d;
    theta[(j, i)] += d;

    // A = W_CC⁻¹ (S_CC − W_CC) W_CC⁻¹
    let e = (sii - wii, sij - wij, sjj - wjj);
    let m11 = wi.0 * e.0 + wi.1 * e.1;
    let m12 = wi.0 * e.1 + wi.1 * e.2;
    let m21 = wi.1 * e.0 + wi.2 * e.1;
    let m22 = wi.1 * e.1 + wi.2 * e.2;
    let a11 = m11 * wi.0 + m12 * wi.1;
    let a12 = m11 * wi.1 + m12 * wi.2;
    let a22 = m21 * wi.1 + m22 * wi.2;

    // W ← W + U A Uᵀ with U = [W e_i, W e_j]
    let u: Vec<T> = w.column(i).iter().copied().collect();
    let v: Vec<T> = w.column(j).iter().copied().collect();
    let data = w.as_mut_slice();
    for c in 0..p {
        let x = a11 * u[c] + a12 * v[c];
        let y = a12 * u[c] + a22 * v[c];
        let col = &mut data[c * p..(c + 1) * p];
        for r in 0..p {
            col[r] += u[r] * x + v[r] * y;
        }
    }
    true
}

fn vertex_update<T: Scalar>(theta: &mut Matrix<T>, w: &mut Matrix<T>, s: &Matrix<T>, i: usize) -> bool {
    let p = s.nrows();
    let (wii, sii) = (w[(i, i)], s[(i, i)]);
    if !(wii > T::zero()) {
        return false;
    }
    theta[(i, i)] += T::one() / sii - T::one() / wii;
    let a = (sii - wii) / (wii * wii);
    let u: Vec<T> = w.column(i).iter().copied().collect();
    let data = w.as_mut_slice();
    for c in 0..p {
        let x = a * u[c];
        let col = &mut data[c * p..(c + 1) * p];
        for r in 0..p {
            col[r] += u[r] * x;
        }
    }
    true
}

/// Stationarity residual: max over the diagonal and pattern edges of
/// |[Θ⁻¹]_ij − Σ̂_ij|, combined (by max) with the largest off-pattern |θ_ij|.
pub fn kkt_residual<T: Scalar>(theta: &PrecisionEstimate<T>, cov: &CovarianceEstimate<T>) -> Result<T> {
    let w = linalg::inverse_pd(&theta.matrix)?;
    let s = &cov.matrix;
    if w.shape() != s.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", s.shape()),
            found: format!("{:?}", w.shape()),
        });
    }
    let p = s.nrows();
    let mut r = T::zero();
    let mut k = 0;
    for i in 0..p {
        r = r.max((w[(i, i)] - s[(i, i)]).abs());
        for j in (i + 1)..p {
            if theta.pattern.get(k) {
                r = r.max((w[(i, j)] - s[(i, j)]).abs());
            } else {
                r = r.max(theta.matrix[(i, j)].abs()).max(theta.matrix[(j, i)].abs());
            }
            k += 1;
        }
    }
    Ok(r)
}

/// Pattern → fit memo for one covariance matrix, confined to one chain.
///
/// Failed or non-converged fits are remembered as `None` so they are not
/// retried.
#[derive(Debug)]
pub struct FitCache<T: Scalar> {
    fingerprint: u64,
    entries: HashMap<SparsityPattern, Option<Arc<PrecisionEstimate<T>>>>,
    hits: usize,
    misses: usize,
}

fn fingerprint<T: Scalar>(cov: &Matrix<T>) -> u64 {
    let mut h = DefaultHasher::new();
    cov.shape().hash(&mut h);
    for v in cov.iter() {
        v.as_f64().to_bits().hash(&mut h);
    }
    h.finish()
}

impl<T: Scalar> FitCache<T> {
    pub fn new(cov: &CovarianceEstimate<T>) -> Self {
        Self { fingerprint: fingerprint(&cov.matrix), entries: HashMap::new(), hits: 0, misses: 0 }
    }

    pub fn get_or_fit(
        &mut self,
        cov: &CovarianceEstimate<T>,
        pattern: &SparsityPattern,
        cfg: &SolverConfig<T>,
        warm: Option<&Matrix<T>>,
    ) -> Option<Arc<PrecisionEstimate<T>>> {
        let fp = fingerprint(&cov.matrix);
        if fp != self.fingerprint {
            self.entries.clear();
            self.fingerprint = fp;
        }
        if let Some(hit) = self.entries.get(pattern) {
            self.hits += 1;
            return hit.clone();
        }
        self.misses += 1;
        let fit = match fit_constrained_mle_from(cov, pattern, cfg, warm) {
            Ok(est) if est.converged => Some(Arc::new(est)),
            Ok(est) => {
                log::warn!(
                    "constrained MLE for pattern with {} edges stopped at residual {} after {} sweeps",
                    pattern.count(),
                    est.kkt_residual,
                    est.iterations
                );
                None
            }
            Err(e) => {
                log::warn!("constrained MLE for pattern with {} edges failed: {e}", pattern.count());
                None
            }
        };
        self.entries.insert(pattern.clone(), fit.clone());
        fit
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SparsityPattern, Option<&Arc<PrecisionEstimate<T>>>)> {
        self.entries.iter().map(|(k, v)| (k, v.as_ref()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::empirical_covariance;
    use crate::graph_model::{num_slots, EdgeList};
    use crate::oracle;
    use crate::sampling::sample_gaussian;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cov(v: &[f64], p: usize) -> CovarianceEstimate<f64> {
        CovarianceEstimate::from_matrix(DMatrix::from_row_slice(p, p, v), 100).unwrap()
    }

    fn chain3() -> CovarianceEstimate<f64> {
        cov(&[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0], 3)
    }

    fn random_instance(rng: &mut ChaCha8Rng, p: usize) -> (CovarianceEstimate<f64>, SparsityPattern) {
        let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.random::<f64>() - 0.5);
        let sigma = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
        let n = 3 * p + rng.random_range(0..20);
        let x = sample_gaussian(&sigma, n, rng).unwrap();
        let c = empirical_covariance(&x).unwrap();
        let slots: Vec<usize> = (0..num_slots(p)).filter(|_| rng.random::<f64>() < 0.5).collect();
        (c, SparsityPattern::from_slots(p, slots).unwrap())
    }

    #[test]
    fn full_pattern_is_the_inverse() {
        let c = chain3();
        let fit = fit_constrained_mle(&c, &SparsityPattern::full(3), &SolverConfig::default()).unwrap();
        let inv = linalg::inverse_pd(&c.matrix).unwrap();
        assert!(linalg::max_abs_diff(&fit.matrix, &inv) < 1e-12);
        assert!(fit.iterations <= 1);
        assert!(fit.converged);
    }

    #[test]
    fn empty_pattern_is_inverse_diagonal() {
        let c = cov(&[2.0, 0.3, 0.1, 0.3, 4.0, 0.2, 0.1, 0.2, 0.5], 3);
        let fit = fit_constrained_mle(&c, &SparsityPattern::empty(3), &SolverConfig::default()).unwrap();
        assert_eq!(fit.matrix, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.25, 2.0])));
        assert_eq!(kkt_residual(&fit, &c).unwrap(), 0.0);
    }

    #[test]
    fn chain_pattern_matches_clique_separator_formula() {
        // Decomposable graph 1-2-3 with cliques {1,2}, {2,3} and separator {2}:
        // Θ̂ = [S₁₂⁻¹]⁰ + [S₂₃⁻¹]⁰ − [S₂⁻¹]⁰.
        let c = chain3();
        let s = &c.matrix;
        let mut closed = DMatrix::<f64>::zeros(3, 3);
        for (a, b) in [(0usize, 1usize), (1, 2)] {
            let blk = DMatrix::from_row_slice(2, 2, &[s[(a, a)], s[(a, b)], s[(b, a)], s[(b, b)]]);
            let inv = blk.try_inverse().unwrap();
            closed[(a, a)] += inv[(0, 0)];
            closed[(a, b)] += inv[(0, 1)];
            closed[(b, a)] += inv[(1, 0)];
            closed[(b, b)] += inv[(1, 1)];
        }
        closed[(1, 1)] -= 1.0 / s[(1, 1)];

        let pattern = SparsityPattern::from_slots(3, [0, 2]).unwrap();
        let fit = fit_constrained_mle(&c, &pattern, &SolverConfig { tol: 1e-12, ..Default::default() }).unwrap();
        assert_eq!(fit.matrix[(0, 2)], 0.0);
        assert_eq!(fit.matrix[(2, 0)], 0.0);
        assert!(linalg::max_abs_diff(&fit.matrix, &closed) < 1e-8);

        let w = linalg::inverse_pd(&fit.matrix).unwrap();
        assert!((w[(0, 1)] - 0.5).abs() < 1e-8);
        assert!((w[(1, 2)] - 0.5).abs() < 1e-8);
        for i in 0..3 {
            assert!((w[(i, i)] - 1.0).abs() < 1e-8);
        }
        assert!(kkt_residual(&fit, &c).unwrap() < 1e-8);

        let dense = oracle::projected_gradient_mle(&c.matrix, &pattern, 1e-10, 200_000).unwrap();
        assert!(linalg::frobenius_distance(&fit.matrix, &dense) < 1e-8);
    }

    #[test]
    fn kkt_residual_of_exact_solutions() {
        let c = chain3();
        let full = PrecisionEstimate {
            matrix: linalg::inverse_pd(&c.matrix).unwrap(),
            pattern: SparsityPattern::full(3),
            iterations: 0,
            kkt_residual: 0.0,
            converged: true,
            ridge_applied: 0.0,
        };
        assert!(kkt_residual(&full, &c).unwrap() < 1e-12);

        let bad = PrecisionEstimate { matrix: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), pattern: SparsityPattern::full(2), ..full.clone() };
        assert!(kkt_residual(&bad, &cov(&[1.0, 0.0, 0.0, 1.0], 2)).is_err());
    }

    #[test]
    fn matches_dense_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = SolverConfig { tol: 1e-10, ..Default::default() };
        for trial in 0..20 {
            let p = 2 + trial % 5;
            let (c, pattern) = random_instance(&mut rng, p);
            let fit = fit_constrained_mle(&c, &pattern, &cfg).unwrap();
            assert!(fit.converged);
            assert!(kkt_residual(&fit, &c).unwrap() < 1e-9);
            let dense = oracle::projected_gradient_mle(&c.matrix, &pattern, 1e-11, 500_000).unwrap();
            let gap = linalg::frobenius_distance(&fit.matrix, &dense);
            assert!(gap < 1e-6, "trial {trial}: gap {gap}");
        }
    }

    #[test]
    fn off_pattern_entries_are_exact_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (c, pattern) = random_instance(&mut rng, 6);
        let fit = fit_constrained_mle(&c, &pattern, &SolverConfig::default()).unwrap();
        let list = EdgeList::new(6);
        for k in 0..list.len() {
            let (i, j) = list.pair(k);
            if !pattern.get(k) {
                assert_eq!(fit.matrix[(i, j)], 0.0);
                assert_eq!(fit.matrix[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn warm_start_reaches_the_same_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (c, pattern) = random_instance(&mut rng, 6);
        let cfg = SolverConfig { tol: 1e-10, ..Default::default() };
        let cold = fit_constrained_mle(&c, &pattern, &cfg).unwrap();
        let start = linalg::inverse_pd(&c.matrix).unwrap();
        let warm = fit_constrained_mle_from(&c, &pattern, &cfg, Some(&start)).unwrap();
        assert!(linalg::max_abs_diff(&cold.matrix, &warm.matrix) < 1e-8);
    }

    #[test]
    fn singular_covariance_needs_ridge() {
        // rank-one covariance: every 2×2 block is singular
        let c = cov(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 3);
        let pattern = SparsityPattern::from_slots(3, [0]).unwrap();
        let err = fit_constrained_mle(&c, &pattern, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));

        let fit = fit_constrained_mle(&c, &pattern, &SolverConfig { ridge: 0.1, ..Default::default() }).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.ridge_applied, 0.1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cov(&[1.0, 0.0, 0.0, -1.0], 2);
        assert!(fit_constrained_mle(&c, &SparsityPattern::empty(2), &SolverConfig::default()).is_err());
        let c = chain3();
        assert!(fit_constrained_mle(&c, &SparsityPattern::empty(4), &SolverConfig::default()).is_err());
        assert!(fit_constrained_mle(&c, &SparsityPattern::empty(3), &SolverConfig { tol: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn cache_reuses_fits() {
        let c = chain3();
        let mut cache = FitCache::new(&c);
        let m = SparsityPattern::from_slots(3, [0]).unwrap();
        let a = cache.get_or_fit(&c, &m, &SolverConfig::default(), None).unwrap();
        let b = cache.get_or_fit(&c, &m, &SolverConfig::default(), None).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!((cache.hits(), cache.misses(), cache.len()), (1, 1, 1));
    }

    #[test]
    fn single_precision_fit() {
        let c = CovarianceEstimate::from_matrix(chain3().matrix.map(|v| v as f32), 10).unwrap();
        let pattern = SparsityPattern::from_slots(3, [0, 2]).unwrap();
        let fit = fit_constrained_mle(&c, &pattern, &SolverConfig { tol: 1e-5, ..Default::default() }).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.matrix[(0, 2)], 0.0);
    }

    fn nested_pair(seed: u64, p: usize) -> (CovarianceEstimate<f64>, SparsityPattern, SparsityPattern) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, small) = random_instance(&mut rng, p);
        let mut big = small.clone();
        for k in 0..num_slots(p) {
            if rng.random::<f64>() < 0.5 {
                big.set(k, true);
            }
        }
        (c, small, big)
    }

    #[test]
    fn trace_can_shrink_when_edges_are_added() {
        // The diagonal of the fit is not monotone in the pattern. This
        // instance is confirmed against the dense oracle.
        let (c, small, big) = nested_pair(6051, 4);
        assert!(small.is_subset_of(&big));
        let cfg = SolverConfig { tol: 1e-11, ..Default::default() };
        let fs = fit_constrained_mle(&c, &small, &cfg).unwrap();
        let fb = fit_constrained_mle(&c, &big, &cfg).unwrap();
        let os = oracle::projected_gradient_mle(&c.matrix, &small, 1e-10, 500_000).unwrap();
        let ob = oracle::projected_gradient_mle(&c.matrix, &big, 1e-10, 500_000).unwrap();
        assert!(linalg::frobenius_distance(&fs.matrix, &os) < 1e-6);
        assert!(linalg::frobenius_distance(&fb.matrix, &ob) < 1e-6);
        assert!(fb.matrix.trace() < fs.matrix.trace() - 1e-6, "{} vs {}", fb.matrix.trace(), fs.matrix.trace());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn nested_patterns_order_objective(seed in 0u64..10_000, p in 3usize..=8) {
            let (c, small, big) = nested_pair(seed, p);
            let cfg = SolverConfig { tol: 1e-10, ..Default::default() };
            let fs = fit_constrained_mle(&c, &small, &cfg).unwrap();
            let fb = fit_constrained_mle(&c, &big, &cfg).unwrap();
            let os = fs.objective(&c.matrix).unwrap();
            let ob = fb.objective(&c.matrix).unwrap();
            prop_assert!(ob >= os - 1e-9);
            // stationarity pins tr(Σ̂Θ̂) to p for every pattern
            for f in [&fs, &fb] {
                prop_assert!((linalg::trace_product(&c.matrix, &f.matrix) - p as f64).abs() < 1e-7);
            }
        }
    }
}
