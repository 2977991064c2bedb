//! Slow, independent reference solvers used only to check the production
//! algorithms. Compiled for unit tests and behind the `test-oracles` feature.

use nalgebra::DMatrix;

use crate::graph_model::SparsityPattern;
use crate::linalg::{self, Matrix};

fn zero_off_pattern(g: &mut Matrix<f64>, pattern: &SparsityPattern) {
    let p = pattern.p();
    let mut k = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            if !pattern.get(k) {
                g[(i, j)] = 0.0;
                g[(j, i)] = 0.0;
            }
            k += 1;
        }
    }
}

/// Projected gradient of log det Θ − tr(SΘ), or `None` off the PD cone.
fn ascent_direction(theta: &Matrix<f64>, s: &Matrix<f64>, pattern: &SparsityPattern) -> Option<Matrix<f64>> {
    let mut g = linalg::inverse_pd(theta).ok()? - s;
    zero_off_pattern(&mut g, pattern);
    Some(g)
}

fn loglik(theta: &Matrix<f64>, s: &Matrix<f64>) -> Option<f64> {
    let ld = linalg::log_det(theta).ok()?;
    Some(ld - linalg::trace_product(s, theta))
}

/// Projected gradient ascent for the zero-constrained Gaussian MLE.
///
/// The feasible set is a linear subspace, so projection zeroes the
/// off-pattern gradient entries. Armijo backtracking keeps every iterate
/// positive definite. Near the optimum the value test drowns in rounding,
/// so a step is also taken when the gradient change certifies a local
/// Lipschitz constant below 1/step. Stops when the projected gradient's max-norm is below
/// `tol`.
pub fn projected_gradient_mle(
    s: &Matrix<f64>,
    pattern: &SparsityPattern,
    tol: f64,
    max_iter: usize,
) -> Option<Matrix<f64>> {
    let p = s.nrows();
    let mut theta = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
    let mut f = loglik(&theta, s)?;
    let mut step = 1.0;
    for _ in 0..max_iter {
        let g = ascent_direction(&theta, s, pattern)?;
        if g.amax() < tol {
            return Some(theta);
        }
        let g2 = g.norm_squared();
        step *= 2.0;
        loop {
            let cand = &theta + &g * step;
            if let Some(fc) = loglik(&cand, s) {
                let lipschitz_ok = ascent_direction(&cand, s, pattern)
                    .map(|gc| (&gc - &g).norm() * step <= 0.5 * g2.sqrt() * step)
                    .unwrap_or(false);
                if fc >= f + 0.25 * step * g2 || lipschitz_ok {
                    theta = cand;
                    f = fc;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-300 {
                return None;
            }
        }
    }
    None
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn glasso_smooth(theta: &Matrix<f64>, s: &Matrix<f64>) -> Option<f64> {
    Some(-linalg::log_det(theta).ok()? + linalg::trace_product(s, theta))
}

/// Proximal gradient descent on −log det Θ + tr(SΘ) + λ Σ_{i≠j} |θ_ij|.
///
/// Backtracking on the quadratic upper bound, with the same gradient-change
/// fallback as the MLE oracle once values stop resolving; stops when the
/// gradient-mapping max-norm falls below `tol`.
pub fn proximal_gradient_glasso(s: &Matrix<f64>, lambda: f64, tol: f64, max_iter: usize) -> Option<Matrix<f64>> {
    let p = s.nrows();
    let mut theta = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / (s[(i, i)]) } else { 0.0 });
    let mut step = 1.0;
    for _ in 0..max_iter {
        let grad = s - linalg::inverse_pd(&theta).ok()?;
        let g0 = glasso_smooth(&theta, s)?;
        step *= 2.0;
        loop {
            let mut cand = &theta - &grad * step;
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        cand[(i, j)] = soft(cand[(i, j)], step * lambda);
                    }
                }
            }
            linalg::symmetrize(&mut cand);
            let d = &cand - &theta;
            let accept = match (glasso_smooth(&cand, s), linalg::inverse_pd(&cand)) {
                (Some(g1), Ok(wc)) => {
                    let bound_ok = g1 <= g0 + linalg::trace_product(&grad, &d) + d.norm_squared() / (2.0 * step);
                    let grad_c = s - wc;
                    bound_ok || (&grad_c - &grad).norm() * step <= d.norm()
                }
                _ => false,
            };
            if accept {
                let mapping = d.amax() / step;
                theta = cand;
                if mapping < tol {
                    return Some(theta);
                }
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return None;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_pattern_oracle_inverts() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let t = projected_gradient_mle(&s, &SparsityPattern::full(2), 1e-12, 100_000).unwrap();
        assert!(linalg::max_abs_diff(&t, &s.try_inverse().unwrap()) < 1e-10);
    }

    #[test]
    fn glasso_oracle_unpenalized_inverts() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let t = proximal_gradient_glasso(&s, 0.0, 1e-12, 100_000).unwrap();
        assert!(linalg::max_abs_diff(&t, &s.try_inverse().unwrap()) < 1e-10);
    }
}
