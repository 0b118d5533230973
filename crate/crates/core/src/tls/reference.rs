//! Direct stacked-matrix formulation of the TLS problem.
//!
//! The production path never materializes the per-patch design matrix `P`;
//! it works with the accumulated quadratic form `Q` so fog correction can be
//! applied to the covariances. This module builds `P` explicitly and solves
//! by SVD. It exists to cross-check the composed path: `Q` must equal `P^T P`
//! whenever the cross statistics are computed from the same center values,
//! and both solvers must recover planted coefficients.

use nalgebra::{DMatrix, DVector};

use crate::tls::basis::BasisMatrix;
use crate::tls::solve::{AlphaOutcome, DegenerateReason};

/// Stacks the weighted design matrix `P`, one row per training patch.
///
/// Row `m` holds `a_m (s_m - beta')^T C` in the first `L` columns and
/// `a_m b_last (x_m - mean(x))` in the last, where `x` are the fog-free
/// center values the regression should reproduce.
pub fn build_p(
    patches: &DMatrix<f64>,
    beta_prime: &DVector<f64>,
    a: &DVector<f64>,
    x_centers: &DVector<f64>,
    basis: &BasisMatrix,
    b_last: f64,
) -> DMatrix<f64> {
    let m = patches.ncols();
    let l = basis.l();
    let x_mean = x_centers.sum() / m as f64;
    let mut p = DMatrix::zeros(m, l + 1);
    for mi in 0..m {
        let z = patches.column(mi) - beta_prime;
        let row = z.transpose() * basis.matrix();
        for k in 0..l {
            p[(mi, k)] = a[mi] * row[(0, k)];
        }
        p[(mi, l)] = a[mi] * b_last * (x_centers[mi] - x_mean);
    }
    p
}

/// Solves the homogeneous system by SVD of `P`: the right singular vector of
/// the smallest singular value, mapped through the same coefficient ratio as
/// the eigensolver.
pub fn solve_alpha_direct(p: &DMatrix<f64>, b_last: f64, null_tol: f64) -> AlphaOutcome {
    let dim = p.ncols();
    let svd = p.clone().svd(false, true);
    let v_t = svd.v_t.expect("SVD with right vectors requested");
    let mut k_min = 0;
    for k in 1..svd.singular_values.len() {
        if svd.singular_values[k] < svd.singular_values[k_min] {
            k_min = k;
        }
    }
    let last = dim - 1;
    let v_last = v_t[(k_min, last)];
    if v_last.abs() < null_tol {
        return AlphaOutcome::Degenerate(DegenerateReason::NullLastComponent);
    }
    let denom = b_last * v_last;
    let alpha = DVector::from_fn(last, |l, _| -v_t[(k_min, l)] / denom);
    let sv = svd.singular_values[k_min];
    AlphaOutcome::Solved {
        alpha,
        min_eigenvalue: sv * sv,
    }
}
