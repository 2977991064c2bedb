//! Losses against a known truth and structure-recovery scores.

use crate::aggregation::{FittedPattern, PriorSpec};
use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::graph_model::{SparsityPattern, TrueModel};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

/// Magnitude below which an entry of a dense estimate is not an edge.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;
/// MH inclusion frequency at or above which a slot is a selected edge.
pub const DEFAULT_FREQUENCY_THRESHOLD: f64 = 0.5;
/// Bound on max tr(Θ̂_m)/p above which the trace assumption is flagged.
pub const DEFAULT_TRACE_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub estimated: usize,
    pub truth: usize,
    pub both: usize,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Scores an estimated edge set against the true one. An empty estimate
/// has precision 1 only when the truth is empty too.
pub fn structure_scores_from_edges(estimated: &SparsityPattern, truth: &SparsityPattern) -> Result<StructureScores> {
    if estimated.p() != truth.p() {
        return Err(Error::DimensionMismatch {
            expected: format!("p = {}", truth.p()),
            found: format!("p = {}", estimated.p()),
        });
    }
    let (e, t, both) = (estimated.count(), truth.count(), estimated.intersection_count(truth));
    let precision = if e == 0 {
        if t == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        both as f64 / e as f64
    };
    let recall = if t == 0 { 1.0 } else { both as f64 / t as f64 };
    Ok(StructureScores { precision, recall, f1: f1_score(precision, recall), estimated: e, truth: t, both })
}

/// Edges of `theta_hat` are off-diagonal entries with |θ̂_ij| > `zero_tol`.
pub fn structure_scores<T: Scalar>(theta_hat: &Matrix<T>, truth: &TrueModel<T>, zero_tol: T) -> Result<StructureScores> {
    if zero_tol < T::zero() {
        return Err(Error::Config("zero tolerance must be nonnegative".into()));
    }
    let est = SparsityPattern::from_support(theta_hat, zero_tol);
    structure_scores_from_edges(&est, &truth.adjacency)
}

/// Σ_ij (θ̂_ij − θ_ij)².
pub fn frobenius_sq<T: Scalar>(theta_hat: &Matrix<T>, theta: &Matrix<T>) -> Result<T> {
    if theta_hat.shape() != theta.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", theta.shape()),
            found: format!("{:?}", theta_hat.shape()),
        });
    }
    Ok(theta_hat.iter().zip(theta.iter()).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b)))
}

/// tr(Θ̂Σ) − log det Θ̂.
pub fn risk<T: Scalar>(theta_hat: &Matrix<T>, sigma: &Matrix<T>) -> Result<T> {
    if theta_hat.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", sigma.shape()),
            found: format!("{:?}", theta_hat.shape()),
        });
    }
    Ok(linalg::trace_product(theta_hat, sigma) - linalg::log_det(theta_hat)?)
}

/// −log det Θ̂ + tr(Θ̂Σ) − (−log det Θ + p).
pub fn kl_loss<T: Scalar>(theta_hat: &Matrix<T>, truth: &TrueModel<T>) -> Result<T> {
    let p = truth.precision.nrows();
    Ok(risk(theta_hat, &truth.covariance)? + linalg::log_det(&truth.precision)? - T::count(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub frobenius_sq: f64,
    pub kl: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// (|Ê|, |E|, |Ê ∩ E|)
    pub edge_counts: (usize, usize, usize),
}

/// Full evaluation of an estimate whose selected edge set is given separately
/// (the MH frequency rule or a test's decisions need not match the support).
pub fn evaluate<T: Scalar>(theta_hat: &Matrix<T>, edges: &SparsityPattern, truth: &TrueModel<T>) -> Result<EvalReport> {
    let s = structure_scores_from_edges(edges, &truth.adjacency)?;
    Ok(EvalReport {
        frobenius_sq: frobenius_sq(theta_hat, &truth.precision)?.as_f64(),
        kl: kl_loss(theta_hat, truth)?.as_f64(),
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
        edge_counts: (s.estimated, s.truth, s.both),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGap {
    /// KL(Θ̂_gES) − min_m KL(Θ̂_m).
    pub gap: f64,
    pub ges_kl: f64,
    pub best_kl: f64,
    /// min_m {KL(Θ̂_m) + (2/n₂)·log(1/π_m) + tr((Θ̂_m − Θ̂_gES)(S − Σ))}
    /// with π normalized over the enumerated patterns.
    pub bound: f64,
    /// bound − KL(Θ̂_gES); nonnegative whenever the aggregation inequality holds.
    pub slack: f64,
}

/// Excess KL risk of the aggregate over the best enumerated pattern, and
/// the right-hand side of the aggregation inequality for the same fits.
pub fn oracle_gap<T: Scalar>(
    ges: &Matrix<T>,
    fits: &[FittedPattern<T>],
    truth: &TrueModel<T>,
    s: &CovarianceEstimate<T>,
    n2: usize,
    prior: &PriorSpec,
) -> Result<OracleGap> {
    if fits.is_empty() {
        return Err(Error::InvalidInput("oracle gap needs at least one enumerated fit".into()));
    }
    if n2 == 0 {
        return Err(Error::Config("n₂ must be positive".into()));
    }
    let ges_kl = kl_loss(ges, truth)?.as_f64();
    let log_prior: Vec<f64> = fits.iter().map(|f| prior.log_prior_for_count(f.pattern().count())).collect();
    let max_lp = log_prior.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_h = max_lp + log_prior.iter().map(|lp| (lp - max_lp).exp()).sum::<f64>().ln();
    let resid = &s.matrix - &truth.covariance;

    let mut best_kl = f64::INFINITY;
    let mut bound = f64::INFINITY;
    for (f, lp) in fits.iter().zip(&log_prior) {
        let kl = kl_loss(&f.fit.matrix, truth)?.as_f64();
        best_kl = best_kl.min(kl);
        let diff = &f.fit.matrix - ges;
        let term = kl + 2.0 / n2 as f64 * (log_h - lp) + linalg::trace_product(&diff, &resid).as_f64();
        bound = bound.min(term);
    }
    Ok(OracleGap { gap: ges_kl - best_kl, ges_kl, best_kl, bound, slack: bound - ges_kl })
}

/// Checks that the largest visited tr(Θ̂_m)/p stays below `limit`; logs a
/// warning and returns false otherwise.
pub fn probe_trace_assumption(max_trace_per_dim: f64, limit: f64) -> bool {
    let ok = max_trace_per_dim.is_finite() && max_trace_per_dim < limit;
    if !ok {
        log::warn!("largest tr(Θ̂_m)/p among visited patterns is {max_trace_per_dim}, above {limit}");
    }
    ok
}
