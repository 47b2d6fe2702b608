//! Dense linear-algebra kernels used by the subproblem solvers.
//!
//! Everything here works on small dense `nalgebra` matrices. The only
//! factorizations are an `LDLᵀ` with rank-one modification, a Householder
//! QR with column pivoting, and a full SVD for condition numbers.

mod householder;
mod ldlt;

pub use householder::{eliminate_equalities, HouseholderQr, OrthoElimination};
pub use ldlt::{form_r_q, ldlt_factor, ldlt_rank_one_update, LdltFactors};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("indefinite downdate at pivot {pivot}")]
    IndefiniteDowndate { pivot: usize },
    #[error("inconsistent equalities (residual {residual:e})")]
    InconsistentEqualities { residual: f64 },
}

/// `σ_max / σ_min` over the `min(rows, cols)` singular values of a full SVD.
/// Returns `f64::INFINITY` when the smallest singular value is zero to working
/// precision (below `ε·max(rows, cols)·σ_max`).
/// An empty matrix has condition 1.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let floor = f64::EPSILON * (m.nrows().max(m.ncols()) as f64) * smax;
    if smax == 0.0 || smin <= floor || !smin.is_finite() {
        return f64::INFINITY;
    }
    let k = smax / smin;
    if k.is_finite() {
        k
    } else {
        f64::INFINITY
    }
}

/// Numerical rank at threshold `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Solve `U x = b` for upper-triangular `U` (leading `k×k` block).
pub(crate) fn back_substitute(u: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut x = b.to_vec();
    for i in (0..k).rev() {
        let mut acc = x[i];
        for j in i + 1..k {
            acc -= u[(i, j)] * x[j];
        }
        x[i] = acc / u[(i, i)];
    }
    x
}

/// Solve `Uᵀ x = b` for upper-triangular `U` (leading `k×k` block).
pub(crate) fn forward_substitute_transposed(u: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut x = b.to_vec();
    for i in 0..k {
        let mut acc = x[i];
        for j in 0..i {
            acc -= u[(j, i)] * x[j];
        }
        x[i] = acc / u[(i, i)];
    }
    x
}
