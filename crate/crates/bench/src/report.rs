//! Report rows and their CSV / JSON emission.
//!
//! The CSV carries only the table columns, so identical runs produce
//! identical bytes. Wall time and solver diagnostics go to JSON only.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gges::metrics::EvalReport;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub candidates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub visited_patterns: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_fits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_trace_per_dim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub solver_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub estimator: String,
    /// Replication index, or `mean` / `se` for aggregate rows.
    pub replication: String,
    pub frobenius: Option<f64>,
    pub kl: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
    #[serde(default)]
    pub wall_time_s: Option<f64>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl ReportRow {
    pub fn ok(model: &str, estimator: &str, replication: usize, r: &EvalReport, diagnostics: Diagnostics, secs: f64) -> Self {
        Self {
            model: model.into(),
            estimator: estimator.into(),
            replication: replication.to_string(),
            frobenius: Some(r.frobenius_sq),
            kl: Some(r.kl),
            precision: Some(r.precision),
            recall: Some(r.recall),
            f1: Some(r.f1),
            status: "ok".into(),
            wall_time_s: Some(secs),
            diagnostics,
        }
    }

    pub fn failed(model: &str, estimator: &str, replication: usize, reason: String) -> Self {
        Self {
            model: model.into(),
            estimator: estimator.into(),
            replication: replication.to_string(),
            frobenius: None,
            kl: None,
            precision: None,
            recall: None,
            f1: None,
            status: format!("failed: {reason}"),
            wall_time_s: None,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn is_aggregate(&self) -> bool {
        self.replication == "mean" || self.replication == "se"
    }

    fn metrics(&self) -> [Option<f64>; 5] {
        [self.frobenius, self.kl, self.precision, self.recall, self.f1]
    }
}

/// Table-layout view of a row.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    model: String,
    estimator: String,
    replication: String,
    frobenius: Option<f64>,
    kl: Option<f64>,
    precision: Option<f64>,
    recall: Option<f64>,
    f1: Option<f64>,
    status: String,
}

impl From<&ReportRow> for CsvRow {
    fn from(r: &ReportRow) -> Self {
        Self {
            model: r.model.clone(),
            estimator: r.estimator.clone(),
            replication: r.replication.clone(),
            frobenius: r.frobenius,
            kl: r.kl,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            status: r.status.clone(),
        }
    }
}

/// Mean and standard error (sd/√k, sd with k−1) over the successful rows
/// of each (model, estimator), in first-appearance order.
pub fn aggregate_rows(rows: &[ReportRow]) -> Vec<ReportRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows.iter().filter(|r| !r.is_aggregate()) {
        let key = (r.model.clone(), r.estimator.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = Vec::new();
    for (model, estimator) in keys {
        let ok: Vec<&ReportRow> =
            rows.iter().filter(|r| r.model == model && r.estimator == estimator && r.is_ok() && !r.is_aggregate()).collect();
        let k = ok.len();
        let mut mean = [None; 5];
        let mut se = [None; 5];
        if k > 0 {
            for c in 0..5 {
                let vals: Vec<f64> = ok.iter().filter_map(|r| r.metrics()[c]).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = if vals.len() > 1 {
                    vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64
                } else {
                    0.0
                };
                mean[c] = Some(m);
                se[c] = Some((var / vals.len() as f64).sqrt());
            }
        }
        let status = format!("ok ({k} of {} replications)", rows.iter().filter(|r| r.model == model && r.estimator == estimator && !r.is_aggregate()).count());
        for (label, vals) in [("mean", mean), ("se", se)] {
            out.push(ReportRow {
                model: model.clone(),
                estimator: estimator.clone(),
                replication: label.into(),
                frobenius: vals[0],
                kl: vals[1],
                precision: vals[2],
                recall: vals[3],
                f1: vals[4],
                status: status.clone(),
                wall_time_s: None,
                diagnostics: Diagnostics::default(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(BenchError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn write_report<W: Write>(out: W, rows: &[ReportRow], format: Format) -> Result<(), BenchError> {
    if rows.is_empty() {
        return Err(BenchError::Config("no report rows to emit".into()));
    }
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(CsvRow::from(r))?;
            }
            w.flush().map_err(|e| BenchError::Io("report".into(), e))?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(out, rows)?;
        }
    }
    Ok(())
}

pub fn emit_report(rows: &[ReportRow], format: Format, path: &Path) -> Result<(), BenchError> {
    let file = File::create(path).map_err(|e| BenchError::Io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    write_report(&mut w, rows, format)?;
    w.flush().map_err(|e| BenchError::Io(path.display().to_string(), e))
}

pub fn read_json_report(text: &str) -> Result<Vec<ReportRow>, BenchError> {
    Ok(serde_json::from_str(text)?)
}
