//! Experiment configuration.
//!
//! A config file is TOML restricted to top-level `key = value` lines, e.g.
//!
//! ```toml
//! model = "AR"        # AR | Hub | Random
//! prob = 0.04         # Random only; default 2/(p-1)
//! n = 200
//! p = 50
//! replications = 20
//! estimators = ["ges", "glasso", "pcortest"]
//! prior = "complexity"
//! s_matrix = "thresholded"
//! burn_in = 1000
//! samples = 4000
//! ```
//!
//! Every key is optional; see [`ExperimentConfig::default`]. Command-line
//! flags override file values.

use std::path::Path;
use std::str::FromStr;

use gges::aggregation::Prior;
use gges::graph_model::GraphModel;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ges,
    Glasso,
    Pcortest,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Ges, Estimator::Glasso, Estimator::Pcortest];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Ges => "gES",
            Estimator::Glasso => "glasso",
            Estimator::Pcortest => "pcorTest",
        }
    }

    /// Tag used to derive this estimator's random stream.
    pub fn stream_tag(&self) -> u64 {
        match self {
            Estimator::Ges => 1,
            Estimator::Glasso => 2,
            Estimator::Pcortest => 3,
        }
    }
}

impl FromStr for Estimator {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ges" => Ok(Estimator::Ges),
            "glasso" => Ok(Estimator::Glasso),
            "pcortest" | "pcor" => Ok(Estimator::Pcortest),
            other => Err(BenchError::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "AR", alias = "ar")]
    Ar,
    #[serde(rename = "Hub", alias = "hub")]
    Hub,
    #[serde(rename = "Random", alias = "random")]
    Random,
}

impl FromStr for ModelKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ar" => Ok(ModelKind::Ar),
            "hub" => Ok(ModelKind::Hub),
            "random" => Ok(ModelKind::Random),
            other => Err(BenchError::Config(format!("unknown graph model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SMatrix {
    Thresholded,
    Empirical,
}

impl FromStr for SMatrix {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "thresholded" => Ok(SMatrix::Thresholded),
            "empirical" => Ok(SMatrix::Empirical),
            other => Err(BenchError::Config(format!("unknown S matrix {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    /// Edge probability for the Random model; `None` means 2/(p−1).
    pub prob: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    /// Fraction of rows in the first subsample.
    pub split: f64,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    #[serde(with = "prior_name")]
    pub prior: Prior,
    pub s_matrix: SMatrix,
    pub burn_in: usize,
    pub samples: usize,
    pub edge_value: f64,
    pub diag_value: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub ridge: f64,
    pub threshold_repeats: usize,
    pub threshold_grid: usize,
    /// Prescreening λ as a fraction of max|σ̂_ij| on the first subsample.
    pub screen_lambda_factor: f64,
    /// Candidate cap as a multiple of p.
    pub max_candidates_per_node: usize,
    pub frequency_threshold: f64,
    pub alpha: f64,
    pub cv_folds: usize,
    pub cv_grid: usize,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Ar,
            prob: None,
            n: 200,
            p: 50,
            replications: 20,
            split: 0.5,
            estimators: Estimator::ALL.to_vec(),
            seed: 2024,
            prior: Prior::Complexity,
            s_matrix: SMatrix::Thresholded,
            burn_in: 1000,
            samples: 4000,
            edge_value: gges::graph_model::DEFAULT_EDGE_VALUE,
            diag_value: gges::graph_model::DEFAULT_DIAG_VALUE,
            solver_tol: 1e-7,
            solver_max_iter: 500,
            ridge: 1e-6,
            threshold_repeats: gges::covariance::DEFAULT_THRESHOLD_REPEATS,
            threshold_grid: gges::covariance::DEFAULT_GRID_POINTS,
            screen_lambda_factor: 0.1,
            max_candidates_per_node: 3,
            frequency_threshold: gges::metrics::DEFAULT_FREQUENCY_THRESHOLD,
            alpha: 0.05,
            cv_folds: 10,
            cv_grid: 20,
            jobs: 1,
        }
    }
}

mod prior_name {
    use gges::aggregation::Prior;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(prior: &Prior, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(prior.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Prior, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn graph_model(&self) -> GraphModel {
        match self.model {
            ModelKind::Ar => GraphModel::Ar,
            ModelKind::Hub => GraphModel::Hub,
            ModelKind::Random => GraphModel::Random { prob: self.prob.unwrap_or(GraphModel::default_random_prob(self.p)) },
        }
    }

    pub fn model_name(&self) -> &'static str {
        self.graph_model().name()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: String| Err(BenchError::Config(m));
        if self.n < 4 {
            return fail(format!("n must be at least 4, got {}", self.n));
        }
        if self.p < 2 {
            return fail(format!("p must be at least 2, got {}", self.p));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return fail(format!("split must lie in (0, 1), got {}", self.split));
        }
        if self.replications == 0 {
            return fail("need at least one replication".into());
        }
        if self.estimators.is_empty() {
            return fail("no estimators selected".into());
        }
        if self.samples == 0 {
            return fail("MH needs at least one retained sample".into());
        }
        if self.model == ModelKind::Hub && self.p % 10 != 0 {
            return fail(format!("hub model needs p divisible by 10, got {}", self.p));
        }
        if let Some(prob) = self.prob {
            if !(0.0..=1.0).contains(&prob) {
                return fail(format!("edge probability {prob} outside [0, 1]"));
            }
        }
        if self.cv_folds < 2 || self.cv_folds > self.n {
            return fail(format!("cv_folds must lie in [2, n], got {}", self.cv_folds));
        }
        if self.jobs == 0 {
            return fail("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Estimators in canonical order without duplicates.
    pub fn estimator_list(&self) -> Vec<Estimator> {
        let mut list = self.estimators.clone();
        list.sort();
        list.dedup();
        list
    }
}
