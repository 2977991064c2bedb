//! Plain-text writers for matrices, edge lists, chain traces and glasso paths.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! reader parsing them back recovers the exact `f64`.

use std::io::{self, Write};

use crate::aggregation::TraceRow;
use crate::covariance::{CovarianceEstimate, CovarianceKind};
use crate::graph_model::SparsityPattern;
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::screening::{GlassoPathPoint, ScreenResult};

/// One matrix row per line, comma separated, no header.
pub fn write_matrix_csv<T: Scalar, W: Write>(out: &mut W, m: &Matrix<T>) -> io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].as_f64().to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Header line `p,kind,gamma`, a value line (gamma empty for the plain
/// empirical estimate), then the matrix rows.
pub fn write_covariance_csv<T: Scalar, W: Write>(out: &mut W, cov: &CovarianceEstimate<T>) -> io::Result<()> {
    writeln!(out, "p,kind,gamma")?;
    match cov.kind {
        CovarianceKind::Empirical => writeln!(out, "{},empirical,", cov.p())?,
        CovarianceKind::Thresholded { gamma } => writeln!(out, "{},thresholded,{}", cov.p(), gamma.as_f64())?,
    }
    write_matrix_csv(out, &cov.matrix)
}

/// `i j value` per edge, 1-based vertices, `value` the matching matrix entry.
pub fn write_edge_list<T: Scalar, W: Write>(out: &mut W, edges: &SparsityPattern, values: &Matrix<T>) -> io::Result<()> {
    for (i, j) in edges.edges() {
        writeln!(out, "{} {} {}", i + 1, j + 1, values[(i, j)].as_f64())?;
    }
    Ok(())
}

/// Candidate edges as `i j`, 1-based.
pub fn write_screen_result<W: Write>(out: &mut W, screen: &ScreenResult, p: usize) -> io::Result<()> {
    let pattern = SparsityPattern::from_slots(p, screen.candidates.iter().copied())
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    for (i, j) in pattern.edges() {
        writeln!(out, "{} {}", i + 1, j + 1)?;
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(out: &mut W, trace: &[TraceRow]) -> io::Result<()> {
    writeln!(out, "iteration,edges,accepted,log_weight")?;
    for r in trace {
        writeln!(out, "{},{},{},{}", r.iteration, r.edges, u8::from(r.accepted), r.log_weight)?;
    }
    Ok(())
}

pub fn write_glasso_path_csv<W: Write>(out: &mut W, path: &[GlassoPathPoint]) -> io::Result<()> {
    writeln!(out, "lambda,edges,objective,converged")?;
    for pt in path {
        writeln!(out, "{},{},{},{}", pt.lambda, pt.edges, pt.objective, u8::from(pt.converged))?;
    }
    Ok(())
}
