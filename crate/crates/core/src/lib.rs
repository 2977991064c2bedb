//! Graphical exponential screening.
//!
//! Sparse precision-matrix estimation for Gaussian graphical models by
//! exponentially weighting zero-constrained maximum-likelihood fits over
//! sparsity patterns. The pieces:
//!
//! - [`graph_model`]: edge indexing, sparsity patterns, synthetic ground truth
//! - [`covariance`]: empirical and hard-thresholded covariance estimates
//! - [`constrained_mle`]: the MLE under a zero pattern
//! - [`aggregation`]: exact and Metropolis-Hastings aggregation
//! - [`screening`]: graphical lasso and partial-correlation baselines, prescreening
//! - [`metrics`]: losses and structure-recovery scores
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases at the root fix the common `f64` case.

pub mod aggregation;
pub mod constrained_mle;
pub mod covariance;
pub mod error;
pub mod graph_model;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod sampling;
pub mod scalar;
pub mod screening;

#[cfg(any(test, feature = "test-oracles"))]
pub mod oracle;

pub use aggregation::{
    exact_ges, mh_run, normalize_weights, restrict_space, AggregationResult, MhConfig, PatternSpace, Prior,
    PriorSpec,
};
pub use constrained_mle::{fit_constrained_mle, FitCache, PrecisionEstimate, SolverConfig};
pub use covariance::{empirical_covariance, hard_threshold, select_threshold, CovarianceEstimate, CovarianceKind};
pub use error::{Error, Result};
pub use graph_model::{edge_index, edge_pair, generate_graph, synthesize_precision, GraphModel, SparsityPattern, TrueModel};
pub use linalg::Matrix;
pub use metrics::{evaluate, frobenius_sq, kl_loss, oracle_gap, structure_scores, EvalReport};
pub use scalar::Scalar;
pub use screening::{glasso_fit, pcor_test, prescreen, GlassoConfig, GlassoFit, ScreenMethod, ScreenResult};

pub type Matrix64 = Matrix<f64>;
pub type CovarianceEstimate64 = CovarianceEstimate<f64>;
pub type PrecisionEstimate64 = PrecisionEstimate<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type AggregationResult64 = AggregationResult<f64>;
pub type TrueModel64 = TrueModel<f64>;

pub type Matrix32 = Matrix<f32>;
pub type CovarianceEstimate32 = CovarianceEstimate<f32>;
pub type PrecisionEstimate32 = PrecisionEstimate<f32>;
pub type SolverConfig32 = SolverConfig<f32>;
pub type AggregationResult32 = AggregationResult<f32>;
