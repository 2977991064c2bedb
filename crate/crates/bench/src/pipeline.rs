//! Simulation pipeline: truth → data → estimators → scores.
//!
//! Seeding: every random stream is a `ChaCha8Rng` seeded with the master
//! seed, with `set_stream(8·r + tag)` for replication `r`. Tag 0 drives the
//! graph and the data draw, tags 1–3 drive gES, glasso and pcorTest. A
//! replication's output therefore depends only on (master seed, r, config),
//! never on scheduling or on which other estimators run.

use std::time::Instant;

use gges::aggregation::{mh_run, restrict_space, AggregationResult, MhConfig, PriorSpec};
use gges::constrained_mle::{fit_constrained_mle, SolverConfig};
use gges::covariance::{empirical_covariance, hard_threshold, select_threshold, CovarianceEstimate};
use gges::graph_model::{generate_graph, synthesize_precision, SparsityPattern, TrueModel};
use gges::linalg::{self, Matrix};
use gges::metrics::{evaluate, probe_trace_assumption, DEFAULT_TRACE_LIMIT};
use gges::screening::{
    glasso_fit, glasso_path, pcor_test, prescreen_covariance, GlassoConfig, ScreenMethod,
};
use gges::covariance::default_threshold_grid;
use gges::sampling::sample_gaussian;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Estimator, ExperimentConfig, SMatrix};
use crate::report::{Diagnostics, ReportRow};
use crate::BenchError;

const DATA_TAG: u64 = 0;

pub fn stream_rng(master: u64, replication: usize, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(8 * replication as u64 + tag);
    rng
}

/// Random disjoint row split: the first `floor(n·fraction)` shuffled rows
/// form D1, the rest D2. Returns the data blocks and their row indices.
pub fn split_sample<R: rand::Rng + ?Sized>(
    x: &Matrix<f64>,
    fraction: f64,
    rng: &mut R,
) -> Result<(Matrix<f64>, Matrix<f64>, Vec<usize>, Vec<usize>), BenchError> {
    let n = x.nrows();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(BenchError::Config(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n1 = (n as f64 * fraction).floor() as usize;
    if n1 == 0 || n1 == n {
        return Err(BenchError::Config(format!("split of {n} rows at {fraction} leaves an empty part")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (a, b) = idx.split_at(n1);
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    Ok((x.select_rows(a.iter()), x.select_rows(b.iter()), a, b))
}

/// Held-out Gaussian log-likelihood per fold, log det Θ − tr(S_test Θ).
fn held_out_loglik(theta: &Matrix<f64>, test: &Matrix<f64>) -> f64 {
    match linalg::log_det(theta) {
        Ok(ld) => ld - linalg::trace_product(theta, test),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Log-spaced λ grid from max|σ̂_ij| down to 1% of it.
pub fn cv_lambda_grid(cov: &CovarianceEstimate<f64>, points: usize) -> Vec<f64> {
    let top = cov.max_abs_off_diagonal().max(1e-12);
    let points = points.max(2);
    (0..points)
        .map(|i| top * (0.01f64.ln() * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
}

/// K-fold cross-validation of the glasso penalty. Rows are shuffled, then
/// row at shuffled position i goes to fold i mod K. The chosen λ maximizes
/// the mean held-out log-likelihood; ties go to the larger λ.
pub fn cv_glasso<R: rand::Rng + ?Sized>(
    x: &Matrix<f64>,
    folds: usize,
    grid_points: usize,
    cfg: &GlassoConfig,
    rng: &mut R,
) -> Result<CvResult, BenchError> {
    let n = x.nrows();
    if folds < 2 || folds > n {
        return Err(BenchError::Config(format!("cannot make {folds} folds from {n} rows")));
    }
    let full = empirical_covariance(x)?;
    let grid = cv_lambda_grid(&full, grid_points);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut scores = vec![0.0; grid.len()];
    for f in 0..folds {
        let test: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % folds == f).map(|(_, &r)| r).collect();
        let train: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % folds != f).map(|(_, &r)| r).collect();
        let c_train = empirical_covariance(&x.select_rows(train.iter()))?;
        let c_test = empirical_covariance(&x.select_rows(test.iter()))?;
        for (k, (_, fit)) in glasso_path(&c_train, &grid, cfg)?.into_iter().enumerate() {
            scores[k] += held_out_loglik(&fit.theta, &c_test.matrix) / folds as f64;
        }
    }
    let mut best = 0;
    for k in 1..grid.len() {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    Ok(CvResult { lambda: grid[best], grid, scores })
}

/// Output of one estimator on one dataset.
#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub theta: Matrix<f64>,
    pub edges: SparsityPattern,
    pub diagnostics: Diagnostics,
    pub aggregation: Option<AggregationResult<f64>>,
}

impl ExperimentConfig {
    pub fn solver(&self) -> SolverConfig<f64> {
        SolverConfig { tol: self.solver_tol, max_iter: self.solver_max_iter, ridge: self.ridge }
    }
}

/// gES on one dataset: split, screen D1, build S from D2, run the chain.
pub fn estimate_ges(x: &Matrix<f64>, cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<EstimateOutput, BenchError> {
    let (d1, d2, _, _) = split_sample(x, cfg.split, rng)?;
    let p = x.ncols();
    let cov1 = empirical_covariance(&d1)?;
    let (s, gamma) = match cfg.s_matrix {
        SMatrix::Empirical => (empirical_covariance(&d2)?, None),
        SMatrix::Thresholded => {
            let cov2 = empirical_covariance(&d2)?;
            let grid = default_threshold_grid(&cov2, cfg.threshold_grid);
            let sel = select_threshold(&d2, cfg.threshold_repeats, &grid, rng)?;
            (hard_threshold(&cov2, sel.gamma)?, Some(sel.gamma))
        }
    };
    let lambda = cfg.screen_lambda_factor * cov1.max_abs_off_diagonal();
    let screen = prescreen_covariance(
        &cov1,
        ScreenMethod::Glasso { lambda },
        Some(cfg.max_candidates_per_node * p),
    )?;
    let space = restrict_space(&screen.candidates, p)?;
    let prior = PriorSpec::new(cfg.prior, p);
    let mh = MhConfig { burn_in: cfg.burn_in, samples: cfg.samples, seed: rand::Rng::random(rng) };
    let agg = mh_run(&cov1, &s, d2.nrows(), &space, &prior, &cfg.solver(), &mh)?;
    probe_trace_assumption(agg.max_trace_per_dim, DEFAULT_TRACE_LIMIT);
    let edges = agg.selected_edges(cfg.frequency_threshold);
    let diagnostics = Diagnostics {
        gamma,
        lambda: Some(lambda),
        candidates: Some(screen.count),
        acceptance_rate: Some(agg.acceptance_rate),
        visited_patterns: Some(agg.visited_patterns),
        failed_fits: Some(agg.failed_fits),
        max_trace_per_dim: Some(agg.max_trace_per_dim),
        ..Default::default()
    };
    Ok(EstimateOutput { theta: agg.estimate.clone(), edges, diagnostics, aggregation: Some(agg) })
}

/// glasso on the full data with λ from K-fold cross-validation.
pub fn estimate_glasso(x: &Matrix<f64>, cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<EstimateOutput, BenchError> {
    let gcfg = GlassoConfig::default();
    let cv = cv_glasso(x, cfg.cv_folds, cfg.cv_grid, &gcfg, rng)?;
    let cov = empirical_covariance(x)?;
    let fit = glasso_fit(&cov, cv.lambda, &gcfg, None)?;
    let edges = fit.support();
    let diagnostics = Diagnostics {
        lambda: Some(cv.lambda),
        solver_iterations: Some(fit.iterations),
        converged: Some(fit.converged),
        ..Default::default()
    };
    Ok(EstimateOutput { theta: fit.theta, edges, diagnostics, aggregation: None })
}

/// pcorTest on the full data. The edge set comes from the tests; the
/// matrix used for the losses is the constrained MLE on that edge set.
pub fn estimate_pcortest(x: &Matrix<f64>, cfg: &ExperimentConfig) -> Result<EstimateOutput, BenchError> {
    let res = pcor_test(x, cfg.alpha)?;
    let cov = empirical_covariance(x)?;
    let fit = fit_constrained_mle(&cov, &res.edges, &cfg.solver())?;
    let diagnostics = Diagnostics {
        solver_iterations: Some(fit.iterations),
        converged: Some(fit.converged),
        ..Default::default()
    };
    Ok(EstimateOutput { theta: fit.matrix, edges: res.edges, diagnostics, aggregation: None })
}

pub fn run_estimator(
    est: Estimator,
    x: &Matrix<f64>,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EstimateOutput, BenchError> {
    match est {
        Estimator::Ges => estimate_ges(x, cfg, rng),
        Estimator::Glasso => estimate_glasso(x, cfg, rng),
        Estimator::Pcortest => estimate_pcortest(x, cfg),
    }
}

/// Ground truth and the n×p sample for replication `r`.
pub fn simulate(cfg: &ExperimentConfig, replication: usize) -> Result<(TrueModel<f64>, Matrix<f64>), BenchError> {
    let mut rng = stream_rng(cfg.seed, replication, DATA_TAG);
    let graph = generate_graph(cfg.graph_model(), cfg.p, &mut rng)?;
    let truth = synthesize_precision(&graph, cfg.edge_value, cfg.diag_value)?;
    let x = sample_gaussian(&truth.covariance, cfg.n, &mut rng)?;
    Ok((truth, x))
}

fn failed_row(cfg: &ExperimentConfig, est: Estimator, r: usize, msg: String) -> ReportRow {
    ReportRow::failed(cfg.model_name(), est.name(), r, msg)
}

/// All estimator rows for one replication. Failures become flagged rows.
pub fn run_replication(cfg: &ExperimentConfig, r: usize) -> Vec<ReportRow> {
    let estimators = cfg.estimator_list();
    let (truth, x) = match simulate(cfg, r) {
        Ok(v) => v,
        Err(e) => {
            log::error!("replication {r}: simulation failed: {e}");
            return estimators.iter().map(|&est| failed_row(cfg, est, r, e.to_string())).collect();
        }
    };
    estimators
        .iter()
        .map(|&est| {
            let mut rng = stream_rng(cfg.seed, r, est.stream_tag());
            let start = Instant::now();
            let result = run_estimator(est, &x, cfg, &mut rng)
                .and_then(|out| Ok((evaluate(&out.theta, &out.edges, &truth)?, out.diagnostics)));
            let secs = start.elapsed().as_secs_f64();
            match result {
                Ok((report, diagnostics)) => ReportRow::ok(cfg.model_name(), est.name(), r, &report, diagnostics, secs),
                Err(e) => {
                    log::error!("replication {r}, {}: {e}", est.name());
                    failed_row(cfg, est, r, e.to_string())
                }
            }
        })
        .collect()
}

/// Runs every replication on a pool of `cfg.jobs` threads. Rows come back
/// in (replication, estimator) order regardless of the thread count.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, BenchError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<ReportRow>> =
        pool.install(|| (0..cfg.replications).into_par_iter().map(|r| run_replication(cfg, r)).collect());
    Ok(per_rep.into_iter().flatten().collect())
}
