//! Real-data ingestion: numeric CSV → n×p matrix, with optional normal
//! scoring, centering and standardization.

use std::path::Path;

use gges::linalg::Matrix;
use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    None,
    /// Φ⁻¹ of the Winsorized rank fraction, column by column.
    NormalScore,
}

impl std::str::FromStr for Transform {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(Transform::None),
            "normal-score" | "normalscore" => Ok(Transform::NormalScore),
            other => Err(BenchError::Config(format!("unknown transform {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub center: bool,
    /// Scale each column to unit variance (1/n convention) after centering.
    pub standardize: bool,
    pub transform: Transform,
    /// `None` detects a header: a first row with any non-numeric cell.
    pub has_header: Option<bool>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { center: true, standardize: false, transform: Transform::None, has_header: None }
    }
}

/// Parses rows of numbers. Errors name the 1-based line and column.
pub fn parse_csv(text: &str, has_header: Option<bool>) -> Result<Matrix<f64>, BenchError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if idx == 0 {
            let numeric = record.iter().all(|c| c.parse::<f64>().is_ok());
            if has_header.unwrap_or(!numeric) {
                continue;
            }
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(BenchError::Parse { line, column: record.len().min(w) + 1, message: format!("expected {w} fields, found {}", record.len()) });
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| BenchError::Parse {
                line,
                column: c + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(BenchError::Parse { line, column: c + 1, message: format!("non-finite value {cell:?}") });
            }
            row.push(v);
        }
        rows.push(row);
    }
    let p = width.unwrap_or(0);
    if rows.is_empty() || p == 0 {
        return Err(BenchError::Parse { line: 1, column: 1, message: "no data rows".into() });
    }
    Ok(DMatrix::from_fn(rows.len(), p, |r, c| rows[r][c]))
}

/// Average ranks, 1-based, ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Winsorization level δ_n = 1 / (4 n^{1/4} √(π ln n)).
pub fn winsor_delta(n: usize) -> f64 {
    let n = n as f64;
    1.0 / (4.0 * n.powf(0.25) * (std::f64::consts::PI * n.ln()).sqrt())
}

/// Φ⁻¹(clamp(r/(n+1), δ_n, 1 − δ_n)) per entry of each column.
pub fn normal_scores(x: &Matrix<f64>) -> Matrix<f64> {
    let (n, p) = x.shape();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let delta = if n > 1 { winsor_delta(n) } else { 0.0 };
    let mut out = DMatrix::zeros(n, p);
    for c in 0..p {
        let col: Vec<f64> = x.column(c).iter().copied().collect();
        for (r, rank) in average_ranks(&col).into_iter().enumerate() {
            let u = (rank / (n as f64 + 1.0)).clamp(delta, 1.0 - delta);
            out[(r, c)] = std_normal.inverse_cdf(u);
        }
    }
    out
}

pub fn center_columns(x: &mut Matrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        col.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Centers, then divides by the 1/n standard deviation. Constant columns
/// stay at zero.
pub fn standardize_columns(x: &mut Matrix<f64>) {
    center_columns(x);
    let n = x.nrows() as f64;
    for (c, mut col) in x.column_iter_mut().enumerate() {
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            col.iter_mut().for_each(|v| *v /= sd);
        } else {
            log::warn!("column {} is constant; left at zero", c + 1);
        }
    }
}

pub fn transform_matrix(mut x: Matrix<f64>, opts: &IngestOptions) -> Matrix<f64> {
    if opts.transform == Transform::NormalScore {
        x = normal_scores(&x);
    }
    if opts.standardize {
        standardize_columns(&mut x);
    } else if opts.center {
        center_columns(&mut x);
    }
    x
}

pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> Result<Matrix<f64>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(path.display().to_string(), e))?;
    Ok(transform_matrix(parse_csv(&text, opts.has_header)?, opts))
}
