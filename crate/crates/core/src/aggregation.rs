//! Exponential-weight aggregation of constrained MLEs over sparsity patterns.
//!
//! Each pattern `m` gets the unnormalized log-weight
//! `(n₂/2)·(log det Θ̂_m − tr(Θ̂_m S)) + log π_m`, where `Θ̂_m` is fit on the
//! first subsample and `S` comes from the second. The aggregate is the
//! weight-averaged `Θ̂_m`. [`exact_ges`] enumerates the pattern space;
//! [`mh_run`] approximates the same average with a Metropolis-Hastings walk
//! over neighboring patterns.
//!
//! All weight arithmetic stays in log space.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::factorial::ln_binomial;

use crate::constrained_mle::{fit_constrained_mle, FitCache, PrecisionEstimate, SolverConfig};
use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::graph_model::{num_slots, SparsityPattern};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prior {
    /// π_m ∝ (|m|₁ / (e·p(p−1)))^|m|₁
    Complexity,
    /// Uniform over the edge count, then uniform among patterns of that size.
    Uniform,
    Flat,
}

impl Prior {
    pub fn name(&self) -> &'static str {
        match self {
            Prior::Complexity => "complexity",
            Prior::Uniform => "uniform",
            Prior::Flat => "flat",
        }
    }
}

impl std::str::FromStr for Prior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complexity" => Ok(Prior::Complexity),
            "uniform" => Ok(Prior::Uniform),
            "flat" => Ok(Prior::Flat),
            other => Err(Error::Config(format!("unknown prior {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorSpec {
    pub kind: Prior,
    pub p: usize,
}

impl PriorSpec {
    pub fn new(kind: Prior, p: usize) -> Self {
        Self { kind, p }
    }

    /// Unnormalized log-prior of a pattern with `edges` set bits.
    pub fn log_prior_for_count(&self, edges: usize) -> f64 {
        let p = self.p as f64;
        match self.kind {
            Prior::Complexity => {
                if edges == 0 {
                    0.0
                } else {
                    let k = edges as f64;
                    k * (k.ln() - 1.0 - (p * (p - 1.0)).ln())
                }
            }
            Prior::Uniform => {
                let n = num_slots(self.p) as u64;
                -((n + 1) as f64).ln() - ln_binomial(n, edges as u64)
            }
            Prior::Flat => 0.0,
        }
    }
}

/// Normalization constant omitted; only ratios are ever used.
pub fn log_prior_unnormalized<T: Scalar>(m: &SparsityPattern, prior: &PriorSpec) -> T {
    T::lit(prior.log_prior_for_count(m.count()))
}

/// H = Σ_m π̃_m over the full hypercube, summed by edge count.
pub fn prior_mass_full_hypercube(prior: &PriorSpec) -> f64 {
    let n = num_slots(prior.p);
    (0..=n)
        .map(|k| (ln_binomial(n as u64, k as u64) + prior.log_prior_for_count(k)).exp())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpaceKind {
    FullHypercube,
    /// Only the listed slots may be set.
    Restricted(Vec<usize>),
    Explicit(Vec<SparsityPattern>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSpace {
    p: usize,
    kind: SpaceKind,
}

pub const DEFAULT_ENUMERATION_CAP: usize = 1 << 16;

impl PatternSpace {
    pub fn full(p: usize) -> Self {
        Self { p, kind: SpaceKind::FullHypercube }
    }

    /// Explicit member list; duplicates collapse, first occurrence wins the order.
    pub fn explicit(p: usize, patterns: Vec<SparsityPattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::InvalidInput("explicit pattern space is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut list = Vec::with_capacity(patterns.len());
        for m in patterns {
            if m.p() != p {
                return Err(Error::DimensionMismatch {
                    expected: format!("patterns over p = {p}"),
                    found: format!("p = {}", m.p()),
                });
            }
            if seen.insert(m.clone()) {
                list.push(m);
            }
        }
        Ok(Self { p, kind: SpaceKind::Explicit(list) })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn contains(&self, m: &SparsityPattern) -> bool {
        if m.p() != self.p {
            return false;
        }
        match &self.kind {
            SpaceKind::FullHypercube => true,
            SpaceKind::Restricted(slots) => {
                let allowed: std::collections::HashSet<usize> = slots.iter().copied().collect();
                m.slots().all(|k| allowed.contains(&k))
            }
            SpaceKind::Explicit(list) => list.contains(m),
        }
    }

    /// Slots a walk may flip; `None` for explicit spaces.
    pub fn free_slots(&self) -> Option<Vec<usize>> {
        match &self.kind {
            SpaceKind::FullHypercube => Some((0..num_slots(self.p)).collect()),
            SpaceKind::Restricted(slots) => Some(slots.clone()),
            SpaceKind::Explicit(_) => None,
        }
    }

    /// log₂ of the number of members.
    pub fn log2_size(&self) -> f64 {
        match &self.kind {
            SpaceKind::FullHypercube => num_slots(self.p) as f64,
            SpaceKind::Restricted(slots) => slots.len() as f64,
            SpaceKind::Explicit(list) => (list.len() as f64).log2(),
        }
    }

    /// Number of members, if it fits in a `usize`.
    pub fn size(&self) -> Option<usize> {
        match &self.kind {
            SpaceKind::Explicit(list) => Some(list.len()),
            _ => {
                let bits = self.log2_size() as u32;
                1usize.checked_shl(bits).filter(|_| bits < usize::BITS)
            }
        }
    }

    /// Where a chain starts: the empty pattern, or the first explicit member
    /// when the empty pattern is not listed.
    pub fn start(&self) -> SparsityPattern {
        let empty = SparsityPattern::empty(self.p);
        match &self.kind {
            SpaceKind::Explicit(list) if !list.contains(&empty) => list[0].clone(),
            _ => empty,
        }
    }

    /// Every member, refusing spaces larger than `cap`.
    pub fn members(&self, cap: usize) -> Result<Vec<SparsityPattern>> {
        let size = self.size().filter(|&s| s <= cap).ok_or_else(|| Error::SpaceTooLarge {
            size: format!("2^{}", self.log2_size()),
            cap,
        })?;
        Ok(match &self.kind {
            SpaceKind::Explicit(list) => list.clone(),
            _ => {
                let slots = self.free_slots().unwrap_or_default();
                (0..size)
                    .map(|mask| {
                        let mut m = SparsityPattern::empty(self.p);
                        for (b, &k) in slots.iter().enumerate() {
                            if mask >> b & 1 == 1 {
                                m.set(k, true);
                            }
                        }
                        m
                    })
                    .collect()
            }
        })
    }
}

/// The product space where only `candidates` may carry edges.
pub fn restrict_space(candidates: &[usize], p: usize) -> Result<PatternSpace> {
    let n = num_slots(p);
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(format!("duplicate candidate slot {}", w[0])));
    }
    if let Some(&k) = sorted.iter().find(|&&k| k >= n) {
        return Err(Error::InvalidEdge { i: k, j: k, p });
    }
    Ok(PatternSpace { p, kind: SpaceKind::Restricted(sorted) })
}

/// Softmax through max-subtraction. Errors on NaN or infinite input.
pub fn normalize_weights<T: Scalar>(log_weights: &[T]) -> Result<Vec<T>> {
    if log_weights.is_empty() {
        return Err(Error::InvalidInput("no weights to normalize".into()));
    }
    if let Some(index) = log_weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let max = log_weights.iter().copied().fold(log_weights[0], |a, b| a.max(b));
    let exps: Vec<T> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    let total = exps.iter().fold(T::zero(), |a, &b| a + b);
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// (n₂/2)·(log det Θ̂ − tr(Θ̂S)) + log π̃_m.
pub fn log_weight_unnormalized<T: Scalar>(
    theta: &PrecisionEstimate<T>,
    s: &CovarianceEstimate<T>,
    n2: usize,
    prior: &PriorSpec,
) -> Result<T> {
    log_weight_of(&theta.matrix, &theta.pattern, s, n2, prior)
}

fn log_weight_of<T: Scalar>(
    theta: &Matrix<T>,
    pattern: &SparsityPattern,
    s: &CovarianceEstimate<T>,
    n2: usize,
    prior: &PriorSpec,
) -> Result<T> {
    if theta.shape() != s.matrix.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", s.matrix.shape()),
            found: format!("{:?}", theta.shape()),
        });
    }
    let fit_term = linalg::log_det(theta)? - linalg::trace_product(theta, &s.matrix);
    Ok(T::count(n2) * T::lit(0.5) * fit_term + log_prior_unnormalized(pattern, prior))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub edges: usize,
    pub accepted: bool,
    pub log_weight: f64,
}

#[derive(Debug, Clone)]
pub struct AggregationResult<T: Scalar> {
    pub estimate: Matrix<T>,
    /// Distinct patterns fitted (exact) or occupied by the chain (MH).
    pub visited_patterns: usize,
    pub acceptance_rate: f64,
    pub trace: Vec<TraceRow>,
    /// Weighted (exact) or empirical (MH, retained iterations) inclusion frequency per slot.
    pub edge_frequency: Vec<f64>,
    /// Patterns dropped (exact) or proposals auto-rejected (MH) because their fit failed.
    pub failed_fits: usize,
    /// Largest tr(Θ̂_m)/p among the fitted patterns.
    pub max_trace_per_dim: f64,
}

impl<T: Scalar> AggregationResult<T> {
    /// Slots whose inclusion frequency reaches `threshold`.
    pub fn selected_edges(&self, threshold: f64) -> SparsityPattern {
        let p = self.estimate.nrows();
        let mut m = SparsityPattern::empty(p);
        for (k, &f) in self.edge_frequency.iter().enumerate() {
            if f >= threshold {
                m.set(k, true);
            }
        }
        m
    }
}

/// One enumerated pattern with its fit and log-weight.
#[derive(Debug, Clone)]
pub struct FittedPattern<T: Scalar> {
    pub fit: Arc<PrecisionEstimate<T>>,
    pub log_weight: T,
}

impl<T: Scalar> FittedPattern<T> {
    pub fn pattern(&self) -> &SparsityPattern {
        &self.fit.pattern
    }
}

fn check_inputs<T: Scalar>(cov1: &CovarianceEstimate<T>, s: &CovarianceEstimate<T>, space: &PatternSpace) -> Result<()> {
    let p = linalg::check_square(&cov1.matrix, "first-sample covariance")?;
    if s.matrix.shape() != (p, p) || space.p() != p {
        return Err(Error::DimensionMismatch {
            expected: format!("p = {p} throughout"),
            found: format!("S {:?}, space p = {}", s.matrix.shape(), space.p()),
        });
    }
    Ok(())
}

/// Fits and weighs every member of `space`. Failed fits are skipped with a
/// warning; the second return value counts them.
pub fn enumerate_fits<T: Scalar>(
    cov1: &CovarianceEstimate<T>,
    s: &CovarianceEstimate<T>,
    n2: usize,
    space: &PatternSpace,
    prior: &PriorSpec,
    solver: &SolverConfig<T>,
    cap: usize,
) -> Result<(Vec<FittedPattern<T>>, usize)> {
    check_inputs(cov1, s, space)?;
    let mut fits = Vec::new();
    let mut failed = 0;
    for m in space.members(cap)? {
        match fit_constrained_mle(cov1, &m, solver) {
            Ok(fit) if fit.converged => {
                let log_weight = log_weight_unnormalized(&fit, s, n2, prior)?;
                fits.push(FittedPattern { fit: Arc::new(fit), log_weight });
            }
            Ok(fit) => {
                log::warn!("dropping pattern {m}: solver stopped at residual {}", fit.kkt_residual);
                failed += 1;
            }
            Err(e) => {
                log::warn!("dropping pattern {m}: {e}");
                failed += 1;
            }
        }
    }
    if fits.is_empty() {
        return Err(Error::AllFitsFailed);
    }
    Ok((fits, failed))
}

/// Weighted average of already-fitted patterns.
pub fn combine_fits<T: Scalar>(fits: &[FittedPattern<T>], failed: usize) -> Result<AggregationResult<T>> {
    let first = fits.first().ok_or(Error::AllFitsFailed)?;
    let p = first.fit.p();
    let weights = normalize_weights(&fits.iter().map(|f| f.log_weight).collect::<Vec<_>>())?;
    let mut estimate = DMatrix::zeros(p, p);
    let mut freq = vec![0.0; num_slots(p)];
    let mut max_trace = f64::NEG_INFINITY;
    for (f, &w) in fits.iter().zip(&weights) {
        estimate += &f.fit.matrix * w;
        for k in f.pattern().slots() {
            freq[k] += w.as_f64();
        }
        max_trace = max_trace.max(f.fit.matrix.trace().as_f64() / p as f64);
    }
    linalg::symmetrize(&mut estimate);
    Ok(AggregationResult {
        estimate,
        visited_patterns: fits.len(),
        acceptance_rate: 1.0,
        trace: Vec::new(),
        edge_frequency: freq,
        failed_fits: failed,
        max_trace_per_dim: max_trace,
    })
}

/// Exact aggregate by enumeration, streaming over the space so memory stays
/// O(p²) however many patterns there are.
pub fn exact_ges<T: Scalar>(
    cov1: &CovarianceEstimate<T>,
    s: &CovarianceEstimate<T>,
    n2: usize,
    space: &PatternSpace,
    prior: &PriorSpec,
    solver: &SolverConfig<T>,
    cap: usize,
) -> Result<AggregationResult<T>> {
    check_inputs(cov1, s, space)?;
    let p = space.p();
    let mut acc = DMatrix::<T>::zeros(p, p);
    let mut freq = vec![0.0f64; num_slots(p)];
    let mut total = T::zero();
    let mut max_lw: Option<T> = None;
    let mut fitted = 0;
    let mut failed = 0;
    let mut max_trace = f64::NEG_INFINITY;

    for m in space.members(cap)? {
        let fit = match fit_constrained_mle(cov1, &m, solver) {
            Ok(fit) if fit.converged => fit,
            Ok(fit) => {
                log::warn!("dropping pattern {m}: solver stopped at residual {}", fit.kkt_residual);
                failed += 1;
                continue;
            }
            Err(e) => {
                log::warn!("dropping pattern {m}: {e}");
                failed += 1;
                continue;
            }
        };
        let lw = log_weight_unnormalized(&fit, s, n2, prior)?;
        if !lw.is_finite() {
            return Err(Error::NonFinite { index: fitted + failed });
        }
        let shift = match max_lw {
            Some(cur) if lw <= cur => cur,
            Some(cur) => {
                let scale = (cur - lw).exp();
                acc *= scale;
                total *= scale;
                freq.iter_mut().for_each(|f| *f *= scale.as_f64());
                max_lw = Some(lw);
                lw
            }
            None => {
                max_lw = Some(lw);
                lw
            }
        };
        let w = (lw - shift).exp();
        acc += &fit.matrix * w;
        total += w;
        for k in m.slots() {
            freq[k] += w.as_f64();
        }
        max_trace = max_trace.max(fit.matrix.trace().as_f64() / p as f64);
        fitted += 1;
    }
    if fitted == 0 {
        return Err(Error::AllFitsFailed);
    }
    if failed > 0 {
        log::warn!("{failed} of {} patterns dropped from the aggregate", fitted + failed);
    }
    let mut estimate = acc / total;
    linalg::symmetrize(&mut estimate);
    let total = total.as_f64();
    freq.iter_mut().for_each(|f| *f /= total);
    Ok(AggregationResult {
        estimate,
        visited_patterns: fitted,
        acceptance_rate: 1.0,
        trace: Vec::new(),
        edge_frequency: freq,
        failed_fits: failed,
        max_trace_per_dim: max_trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MhConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self { burn_in: 1000, samples: 4000, seed: 0 }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("MH needs at least one retained sample".into()));
        }
        Ok(())
    }
}

/// Raw output of [`metropolis_hastings`].
#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Retained-iteration occupancy counts in first-visit order.
    pub visits: Vec<(SparsityPattern, usize)>,
    pub trace: Vec<TraceRow>,
    pub accepted: usize,
    pub iterations: usize,
    pub failed_proposals: usize,
    pub edge_frequency: Vec<f64>,
    pub distinct_states: usize,
}

impl ChainOutput {
    pub fn acceptance_rate(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iterations as f64
        }
    }
}

/// Neighbor lists for an explicit space (members at Hamming distance one).
fn explicit_neighbors(list: &[SparsityPattern]) -> (HashMap<SparsityPattern, usize>, Vec<Vec<usize>>) {
    let index: HashMap<SparsityPattern, usize> = list.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
    let adj = list
        .iter()
        .map(|m| (0..list.len()).filter(|&j| list[j].hamming(m) == 1).collect())
        .collect();
    (index, adj)
}

/// Metropolis-Hastings over a pattern space.
///
/// Starts at [`PatternSpace::start`]. Each iteration proposes a uniformly
/// chosen neighbor (one bit flip among the free slots), draws `r ~ U[0,1)`,
/// and moves when `ln r < log_target(m') − log_target(m)` plus the proposal
/// correction, which is nonzero only for explicit spaces with uneven
/// neighbor counts. `log_target(candidate, current)` returning `None`
/// rejects the proposal. A state with no neighbors stays put and counts the
/// step as accepted.
pub fn metropolis_hastings<F>(space: &PatternSpace, cfg: &MhConfig, mut log_target: F) -> Result<ChainOutput>
where
    F: FnMut(&SparsityPattern, &SparsityPattern) -> Option<f64>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let free = space.free_slots();
    let explicit = match space.kind() {
        SpaceKind::Explicit(list) => Some((list.clone(), explicit_neighbors(list))),
        _ => None,
    };

    let mut current = space.start();
    let mut current_lw = log_target(&current, &current).ok_or(Error::EmptyChain)?;
    let total = cfg.burn_in + cfg.samples;

    let mut index: HashMap<SparsityPattern, usize> = HashMap::new();
    let mut visits: Vec<(SparsityPattern, usize)> = Vec::new();
    let mut states: std::collections::HashSet<SparsityPattern> = std::collections::HashSet::new();
    states.insert(current.clone());
    let mut freq = vec![0.0f64; num_slots(space.p())];
    let mut trace = Vec::with_capacity(total);
    let (mut accepted, mut failed) = (0usize, 0usize);

    for t in 1..=total {
        let proposal: Option<(SparsityPattern, f64)> = match (&free, &explicit) {
            (Some(slots), _) if !slots.is_empty() => {
                let k = slots[rng.random_range(0..slots.len())];
                Some((current.flipped(k), 0.0))
            }
            (_, Some((list, (idx, adj)))) => {
                let here = idx[&current];
                let nb = &adj[here];
                if nb.is_empty() {
                    None
                } else {
                    let there = nb[rng.random_range(0..nb.len())];
                    let correction = (nb.len() as f64).ln() - (adj[there].len() as f64).ln();
                    Some((list[there].clone(), correction))
                }
            }
            _ => None,
        };
        let r: f64 = rng.random();
        let moved = match proposal {
            None => true,
            Some((cand, correction)) => match log_target(&cand, &current) {
                None => {
                    failed += 1;
                    false
                }
                Some(lw) => {
                    if r.ln() < lw - current_lw + correction {
                        current = cand;
                        current_lw = lw;
                        states.insert(current.clone());
                        true
                    } else {
                        false
                    }
                }
            },
        };
        if moved {
            accepted += 1;
        }
        if t > cfg.burn_in {
            match index.get(&current) {
                Some(&i) => visits[i].1 += 1,
                None => {
                    index.insert(current.clone(), visits.len());
                    visits.push((current.clone(), 1));
                }
            }
            for k in current.slots() {
                freq[k] += 1.0;
            }
        }
        trace.push(TraceRow { iteration: t, edges: current.count(), accepted: moved, log_weight: current_lw });
    }
    let n = cfg.samples as f64;
    freq.iter_mut().for_each(|f| *f /= n);
    Ok(ChainOutput {
        visits,
        trace,
        accepted,
        iterations: total,
        failed_proposals: failed,
        edge_frequency: freq,
        distinct_states: states.len(),
    })
}

/// Metropolis-Hastings approximation of the aggregate: the average of Θ̂
/// over the retained iterations. Fits are memoized per pattern and
/// warm-started from the current state's fit.
#[allow(clippy::too_many_arguments)]
pub fn mh_run<T: Scalar>(
    cov1: &CovarianceEstimate<T>,
    s: &CovarianceEstimate<T>,
    n2: usize,
    space: &PatternSpace,
    prior: &PriorSpec,
    solver: &SolverConfig<T>,
    mh: &MhConfig,
) -> Result<AggregationResult<T>> {
    check_inputs(cov1, s, space)?;
    let mut cache = FitCache::new(cov1);
    let mut weights: HashMap<SparsityPattern, f64> = HashMap::new();

    let chain = metropolis_hastings(space, mh, |cand, cur| {
        if let Some(&lw) = weights.get(cand) {
            return Some(lw);
        }
        let warm = cache.get_or_fit(cov1, cur, solver, None);
        let fit = cache.get_or_fit(cov1, cand, solver, warm.as_ref().map(|f| &f.matrix))?;
        let lw = log_weight_unnormalized(&fit, s, n2, prior).ok()?.as_f64();
        lw.is_finite().then(|| {
            weights.insert(cand.clone(), lw);
            lw
        })
    })?;

    let p = space.p();
    let mut estimate = DMatrix::<T>::zeros(p, p);
    let mut max_trace = f64::NEG_INFINITY;
    for (m, count) in &chain.visits {
        let fit = cache.get_or_fit(cov1, m, solver, None).ok_or(Error::EmptyChain)?;
        estimate += &fit.matrix * T::count(*count);
    }
    for (_, fit) in cache.iter() {
        if let Some(fit) = fit {
            max_trace = max_trace.max(fit.matrix.trace().as_f64() / p as f64);
        }
    }
    estimate /= T::count(mh.samples);
    linalg::symmetrize(&mut estimate);

    Ok(AggregationResult {
        estimate,
        visited_patterns: chain.distinct_states,
        acceptance_rate: chain.acceptance_rate(),
        edge_frequency: chain.edge_frequency.clone(),
        failed_fits: chain.failed_proposals,
        max_trace_per_dim: max_trace,
        trace: chain.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{empirical_covariance, CovarianceKind};
    use crate::graph_model::{generate_graph, synthesize_precision, GraphModel};
    use crate::sampling::sample_gaussian;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pat(p: usize, slots: &[usize]) -> SparsityPattern {
        SparsityPattern::from_slots(p, slots.iter().copied()).unwrap()
    }

    fn instance(seed: u64, p: usize, n: usize) -> (CovarianceEstimate<f64>, CovarianceEstimate<f64>) {
        let g = generate_graph(GraphModel::Ar, p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let truth = synthesize_precision::<f64>(&g, 0.4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1 = sample_gaussian(&truth.covariance, n, &mut rng).unwrap();
        let x2 = sample_gaussian(&truth.covariance, n, &mut rng).unwrap();
        (empirical_covariance(&x1).unwrap(), empirical_covariance(&x2).unwrap())
    }

    #[test]
    fn complexity_prior_values() {
        let prior = PriorSpec::new(Prior::Complexity, 3);
        assert_eq!(log_prior_unnormalized::<f64>(&SparsityPattern::empty(3), &prior), 0.0);
        let v: f64 = log_prior_unnormalized(&pat(3, &[1]), &prior);
        assert_relative_eq!(v, (1.0 / (6.0 * std::f64::consts::E)).ln(), epsilon = 1e-12);
        assert_relative_eq!(v, -2.791759469228055, epsilon = 1e-12);
    }

    #[test]
    fn uniform_and_flat_prior_values() {
        let prior = PriorSpec::new(Prior::Uniform, 3);
        let v: f64 = log_prior_unnormalized(&pat(3, &[2]), &prior);
        assert_relative_eq!(v, -(12f64.ln()), epsilon = 1e-12);
        // uniform prior sums to one over the full cube
        assert_relative_eq!(prior_mass_full_hypercube(&PriorSpec::new(Prior::Uniform, 5)), 1.0, epsilon = 1e-12);
        let flat = PriorSpec::new(Prior::Flat, 4);
        assert_eq!(log_prior_unnormalized::<f64>(&SparsityPattern::full(4), &flat), 0.0);
        assert_eq!("Uniform".parse::<Prior>().unwrap(), Prior::Uniform);
        assert!("gaussian".parse::<Prior>().is_err());
    }

    #[test]
    fn complexity_prior_mass_is_at_most_two() {
        for p in 2..=5 {
            let prior = PriorSpec::new(Prior::Complexity, p);
            let by_count = prior_mass_full_hypercube(&prior);
            let enumerated: f64 = PatternSpace::full(p)
                .members(DEFAULT_ENUMERATION_CAP)
                .unwrap()
                .iter()
                .map(|m| log_prior_unnormalized::<f64>(m, &prior).exp())
                .sum();
            assert_relative_eq!(by_count, enumerated, epsilon = 1e-12);
            assert!(enumerated <= 2.0, "p = {p}: H = {enumerated}");
        }
    }

    #[test]
    fn normalize_examples() {
        let w = normalize_weights(&[3.5f64, 3.5, 3.5]).unwrap();
        for v in w {
            assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(normalize_weights(&[0.0f64, -1e300]).unwrap(), vec![1.0, 0.0]);
        let w = normalize_weights(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert_relative_eq!(w[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.75, epsilon = 1e-15);
        assert!(normalize_weights::<f64>(&[]).is_err());
        assert!(normalize_weights(&[0.0, f64::NAN]).is_err());
        assert!(normalize_weights(&[0.0, f64::INFINITY]).is_err());
        // large magnitudes do not overflow
        let w = normalize_weights(&[1e6f64, 1e6 + 2f64.ln()]).unwrap();
        assert_relative_eq!(w[1], 2.0 / 3.0, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn normalize_is_a_shift_invariant_distribution(
            lw in proptest::collection::vec(-500.0f64..500.0, 1..20),
            c in -1e3f64..1e3,
        ) {
            let a = normalize_weights(&lw).unwrap();
            let shifted: Vec<f64> = lw.iter().map(|v| v + c).collect();
            let b = normalize_weights(&shifted).unwrap();
            let sum: f64 = a.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x >= 0.0);
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_log_weight() {
        let p = 3;
        let theta = PrecisionEstimate {
            matrix: DMatrix::<f64>::identity(p, p),
            pattern: SparsityPattern::empty(p),
            iterations: 0,
            kkt_residual: 0.0,
            converged: true,
            ridge_applied: 0.0,
        };
        let s = CovarianceEstimate::from_matrix(DMatrix::identity(p, p), 10).unwrap();
        let lw = log_weight_unnormalized(&theta, &s, 10, &PriorSpec::new(Prior::Flat, p)).unwrap();
        assert_relative_eq!(lw, -5.0 * p as f64, epsilon = 1e-12);

        let other = PrecisionEstimate { pattern: SparsityPattern::full(p), ..theta.clone() };
        let lw2 = log_weight_unnormalized(&other, &s, 10, &PriorSpec::new(Prior::Flat, p)).unwrap();
        assert_eq!(lw, lw2);
    }

    #[test]
    fn strong_correlation_favors_the_edge() {
        // Σ̂ = S = [[1, .8], [.8, 1]]: full fit is Σ̂⁻¹ with log det = −ln 0.36 and
        // tr(Θ S) = 2, against the empty fit I with tr = 2 and log det 0.
        let c = CovarianceEstimate::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]), 50).unwrap();
        let cfg = SolverConfig::default();
        let prior = PriorSpec::new(Prior::Complexity, 2);
        let full = fit_constrained_mle(&c, &SparsityPattern::full(2), &cfg).unwrap();
        let empty = fit_constrained_mle(&c, &SparsityPattern::empty(2), &cfg).unwrap();
        let lf = log_weight_unnormalized(&full, &c, 50, &prior).unwrap();
        let le = log_weight_unnormalized(&empty, &c, 50, &prior).unwrap();
        let expected_full = 25.0 * (-(0.36f64.ln()) - 2.0) + (1.0 / (2.0 * std::f64::consts::E)).ln();
        assert_relative_eq!(lf, expected_full, epsilon = 1e-9);
        assert_relative_eq!(le, -50.0, epsilon = 1e-12);
        assert!(lf > le);
    }

    #[test]
    fn restricted_space_membership() {
        let full = restrict_space(&[0, 1, 2], 3).unwrap();
        assert_eq!(full.members(16).unwrap().len(), PatternSpace::full(3).members(16).unwrap().len());
        let none = restrict_space(&[], 3).unwrap();
        assert_eq!(none.members(16).unwrap(), vec![SparsityPattern::empty(3)]);
        let two = restrict_space(&[2, 0], 3).unwrap();
        let members = two.members(16).unwrap();
        assert_eq!(members.len(), 4);
        assert!(members.iter().all(|m| !m.get(1)));
        assert!(!two.contains(&pat(3, &[1])));
        assert!(restrict_space(&[0, 0], 3).is_err());
        assert!(restrict_space(&[3], 3).is_err());
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let space = PatternSpace::full(7); // 2^21 members
        assert!(matches!(space.members(DEFAULT_ENUMERATION_CAP), Err(Error::SpaceTooLarge { .. })));
    }

    #[test]
    fn singleton_full_pattern_is_the_inverse() {
        let (c1, s) = instance(3, 3, 40);
        let space = PatternSpace::explicit(3, vec![SparsityPattern::full(3)]).unwrap();
        let prior = PriorSpec::new(Prior::Complexity, 3);
        let res = exact_ges(&c1, &s, 40, &space, &prior, &SolverConfig::default(), DEFAULT_ENUMERATION_CAP).unwrap();
        let inv = linalg::inverse_pd(&c1.matrix).unwrap();
        assert!(linalg::max_abs_diff(&res.estimate, &inv) < 1e-10);
    }

    #[test]
    fn explicit_duplicates_collapse() {
        let m = pat(3, &[0]);
        let space = PatternSpace::explicit(3, vec![m.clone(), m.clone(), pat(3, &[1]), m]).unwrap();
        assert_eq!(space.size(), Some(2));
    }

    #[test]
    fn streaming_exact_matches_two_pass_combination() {
        let (c1, s) = instance(5, 4, 30);
        let space = PatternSpace::full(4);
        let prior = PriorSpec::new(Prior::Complexity, 4);
        let cfg = SolverConfig { tol: 1e-10, ..Default::default() };
        let streamed = exact_ges(&c1, &s, 30, &space, &prior, &cfg, DEFAULT_ENUMERATION_CAP).unwrap();
        let (fits, failed) = enumerate_fits(&c1, &s, 30, &space, &prior, &cfg, DEFAULT_ENUMERATION_CAP).unwrap();
        let combined = combine_fits(&fits, failed).unwrap();
        assert!(linalg::max_abs_diff(&streamed.estimate, &combined.estimate) < 1e-12);
        for (a, b) in streamed.edge_frequency.iter().zip(&combined.edge_frequency) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        assert!(linalg::is_positive_definite(&streamed.estimate));
        assert_eq!(streamed.visited_patterns, 64);
    }

    #[test]
    fn singleton_chain_stays_put() {
        let (c1, s) = instance(1, 3, 40);
        let m = pat(3, &[0, 2]);
        let space = PatternSpace::explicit(3, vec![m.clone()]).unwrap();
        let prior = PriorSpec::new(Prior::Complexity, 3);
        let cfg = SolverConfig::default();
        let res = mh_run(&c1, &s, 40, &space, &prior, &cfg, &MhConfig { burn_in: 5, samples: 50, seed: 1 }).unwrap();
        let fit = fit_constrained_mle(&c1, &m, &cfg).unwrap();
        assert!(linalg::max_abs_diff(&res.estimate, &fit.matrix) < 1e-12);
        assert_eq!(res.acceptance_rate, 1.0);
        assert_eq!(res.trace.len(), 55);
    }

    #[test]
    fn chain_is_deterministic_and_offset_invariant() {
        let (c1, s) = instance(9, 4, 25);
        let cfg = SolverConfig::default();
        let prior = PriorSpec::new(Prior::Complexity, 4);
        let space = PatternSpace::full(4);
        let (fits, _) = enumerate_fits(&c1, &s, 25, &space, &prior, &cfg, DEFAULT_ENUMERATION_CAP).unwrap();
        let table: HashMap<SparsityPattern, f64> = fits.iter().map(|f| (f.pattern().clone(), f.log_weight)).collect();
        let mh = MhConfig { burn_in: 100, samples: 3000, seed: 42 };
        let run = |offset: f64| {
            metropolis_hastings(&space, &mh, |cand, _| table.get(cand).map(|v| v + offset)).unwrap()
        };
        let base = run(0.0);
        let again = run(0.0);
        let shifted = run(1234.5);
        let states = |c: &ChainOutput| c.trace.iter().map(|r| (r.edges, r.accepted)).collect::<Vec<_>>();
        assert_eq!(states(&base), states(&again));
        assert_eq!(states(&base), states(&shifted));
        assert_eq!(base.visits, shifted.visits);
    }

    #[test]
    fn flat_prior_two_patterns_visit_frequencies() {
        // p = 2 has two patterns; the chain's occupancy of the edge must
        // match the exact weight within three standard errors.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = sample_gaussian(&DMatrix::<f64>::identity(2, 2), 12, &mut rng).unwrap();
        let c = empirical_covariance(&x).unwrap();
        let prior = PriorSpec::new(Prior::Flat, 2);
        let space = PatternSpace::full(2);
        let cfg = SolverConfig::default();
        let n2 = 12;
        let (fits, _) = enumerate_fits(&c, &c, n2, &space, &prior, &cfg, 16).unwrap();
        let w = normalize_weights(&fits.iter().map(|f| f.log_weight).collect::<Vec<_>>()).unwrap();
        let exact_edge = fits.iter().zip(&w).filter(|(f, _)| f.pattern().count() == 1).map(|(_, w)| *w).sum::<f64>();

        let samples = 200_000;
        let res = mh_run(&c, &c, n2, &space, &prior, &cfg, &MhConfig { burn_in: 1000, samples, seed: 5 }).unwrap();
        let freq = res.edge_frequency[0];
        // two-state chain: flip proposed every step, so the integrated
        // autocorrelation time is (1 + λ)/(1 − λ) with λ = 1 − a − b
        let a = (1.0f64).min(exact_edge / (1.0 - exact_edge));
        let b = (1.0f64).min((1.0 - exact_edge) / exact_edge);
        let lambda = 1.0 - a - b;
        let tau = (1.0 + lambda) / (1.0 - lambda);
        let se = (exact_edge * (1.0 - exact_edge) * tau / samples as f64).sqrt();
        assert!((freq - exact_edge).abs() < 3.0 * se, "freq {freq} exact {exact_edge} se {se}");
    }

    #[test]
    fn mh_approaches_exact_on_three_nodes() {
        let (c1, s) = instance(21, 3, 50);
        let s = crate::covariance::hard_threshold(&s, 0.05).unwrap();
        assert!(matches!(s.kind, CovarianceKind::Thresholded { .. }));
        let prior = PriorSpec::new(Prior::Complexity, 3);
        let cfg = SolverConfig::default();
        let space = PatternSpace::full(3);
        let exact = exact_ges(&c1, &s, 50, &space, &prior, &cfg, DEFAULT_ENUMERATION_CAP).unwrap();
        let mh = mh_run(&c1, &s, 50, &space, &prior, &cfg, &MhConfig { burn_in: 2000, samples: 20_000, seed: 3 }).unwrap();
        let gap = linalg::frobenius_distance(&exact.estimate, &mh.estimate);
        assert!(gap < 1e-2, "gap {gap}");

        let gaps: Vec<f64> = [100, 1000, 10_000]
            .iter()
            .map(|&t| {
                let r = mh_run(&c1, &s, 50, &space, &prior, &cfg, &MhConfig { burn_in: 200, samples: t, seed: 8 }).unwrap();
                linalg::frobenius_distance(&exact.estimate, &r.estimate)
            })
            .collect();
        assert!(gaps[2] < gaps[0], "gaps {gaps:?}");
    }

    #[test]
    fn restricted_chain_only_touches_candidates() {
        let (c1, s) = instance(4, 5, 60);
        let space = restrict_space(&[0, 4, 7], 5).unwrap();
        let prior = PriorSpec::new(Prior::Complexity, 5);
        let res = mh_run(&c1, &s, 60, &space, &prior, &SolverConfig::default(), &MhConfig { burn_in: 10, samples: 500, seed: 2 }).unwrap();
        for (k, f) in res.edge_frequency.iter().enumerate() {
            if ![0, 4, 7].contains(&k) {
                assert_eq!(*f, 0.0);
            }
        }
        assert!((0.0..=1.0).contains(&res.acceptance_rate));
        assert!(linalg::is_positive_definite(&res.estimate));
    }

    #[test]
    fn explicit_space_walk_uses_hastings_correction() {
        // Path-shaped explicit space {∅, {0}, {0,1}} with a flat target: the
        // middle state has two neighbors, the ends one each. With the
        // correction, occupancy is uniform.
        let p = 3;
        let list = vec![pat(p, &[]), pat(p, &[0]), pat(p, &[0, 1])];
        let space = PatternSpace::explicit(p, list.clone()).unwrap();
        let out = metropolis_hastings(&space, &MhConfig { burn_in: 0, samples: 90_000, seed: 4 }, |_, _| Some(0.0)).unwrap();
        for (m, count) in &out.visits {
            let share = *count as f64 / 90_000.0;
            assert!((share - 1.0 / 3.0).abs() < 0.02, "{m}: {share}");
        }
    }
}
