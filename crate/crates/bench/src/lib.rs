//! Simulation harness: synthetic data, the three estimators, metrics and
//! report emission.

pub mod config;
pub mod ingest;
pub mod pipeline;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Core(#[from] gges::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}
