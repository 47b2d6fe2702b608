//! Dual solution of inequality-constrained least squares.
//!
//! `LSQ → LSI` by orthogonal elimination of the equalities, `LSI → LDP` by
//! the substitution `z = E d − f`, and `LDP → NNLS` through its dual. The
//! recovery `z_i = −r_i / r_{n'+1}` cancels badly when the last residual is
//! tiny, so every LDP result carries an accuracy estimate and a reliability
//! flag.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::numkit::{condition_number, eliminate_equalities, LinalgError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LsqError {
    #[error("nnls stalled after {iterations} iterations")]
    NnlsStalled { iterations: usize },
    #[error("least-distance problem is infeasible")]
    Infeasible,
    #[error("dual solution unreliable (last residual {last_residual:e}, error bound {error_bound:e})")]
    Unreliable {
        last_residual: f64,
        error_bound: f64,
    },
    #[error("inconsistent equalities (residual {residual:e})")]
    InconsistentEqualities { residual: f64 },
    #[error("dual infeasible regime: nonpositive residual {0:e}")]
    DualInfeasibleRegime(f64),
    #[error("contract violation: {0}")]
    Contract(String),
}

impl From<LinalgError> for LsqError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::InconsistentEqualities { residual } => {
                LsqError::InconsistentEqualities { residual }
            }
            other => LsqError::Contract(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpOptions {
    /// Results with a last residual below this are flagged unreliable.
    pub guard_floor: f64,
    /// Relative error assumed for the computed `A·u`.
    pub assumed_eps: f64,
    /// Relative perturbation applied to the last component of `A·u` before
    /// recovery. Zero in normal use; the error-propagation experiments set it.
    pub perturb_last: f64,
}

impl Default for LdpOptions {
    fn default() -> Self {
        LdpOptions {
            guard_floor: 2e-10,
            assumed_eps: 1e-12,
            perturb_last: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NnlsResult {
    pub solution: DVector<f64>,
    /// `A·u − b`.
    pub residual_vector: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct LdpResult {
    pub point: DVector<f64>,
    pub reliable: bool,
    /// `1 − (A·u)_{n'+1}`, equal to `‖A·u − b‖²` in exact arithmetic.
    pub last_residual: f64,
    pub error_bound: f64,
    /// Multipliers of the LDP constraints, `u / last_residual`.
    pub multipliers: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LsiResult {
    pub solution: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub reliable: bool,
    pub last_residual: f64,
    pub error_bound: f64,
}

#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub direction: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    /// Inequality rows with a positive multiplier.
    pub active_ineq: Vec<usize>,
    /// Condition number of the equality rows plus active inequality rows.
    pub active_condition: f64,
    pub last_residual: f64,
    pub error_bound: f64,
}

/// Relative error bound on `z` for a given true last residual.
pub fn dual_error_bound(assumed_eps: f64, true_last_residual: f64) -> Result<f64, LsqError> {
    let r = true_last_residual;
    if !(r > 0.0) {
        return Err(LsqError::DualInfeasibleRegime(r));
    }
    if r >= 0.1 {
        Ok(assumed_eps * ((1.0 - r).abs() + 1.0) / r)
    } else {
        Ok(2.0 * assumed_eps / r)
    }
}

fn lstsq_columns(a: &DMatrix<f64>, cols: &[usize], b: &DVector<f64>) -> DVector<f64> {
    let mut sub = DMatrix::zeros(a.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        sub.set_column(k, &a.column(j));
    }
    sub.svd(true, true)
        .solve(b, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(cols.len()))
}

/// Lawson–Hanson active-set NNLS: `min ‖A u − b‖` subject to `u ≥ 0`.
pub fn solve_nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsResult, LsqError> {
    let (m, n) = a.shape();
    if n == 0 {
        return Err(LsqError::Contract("nnls needs at least one column".into()));
    }
    if b.len() != m {
        return Err(LsqError::Contract("rhs length mismatch".into()));
    }
    let max_iter = 3 * n;
    let tol = 1e-13 * (1.0 + a.norm()) * (1.0 + b.norm());
    let mut u = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0usize;
    let mut rejected = vec![false; n];
    loop {
        let w = a.tr_mul(&(b - a * &u));
        let mut t = None;
        let mut best = tol;
        for j in 0..n {
            if !passive[j] && !rejected[j] && w[j] > best {
                best = w[j];
                t = Some(j);
            }
        }
        let Some(t) = t else { break };
        passive[t] = true;
        // inner loop: keep the trial solution strictly positive on the passive set
        let mut first = true;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(LsqError::NnlsStalled {
                    iterations: max_iter,
                });
            }
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let s_p = lstsq_columns(a, &cols, b);
            let mut s = DVector::zeros(n);
            for (k, &j) in cols.iter().enumerate() {
                s[j] = s_p[k];
            }
            if first && s[t] <= 0.0 {
                // the new column cannot enter: numerical noise in w
                passive[t] = false;
                rejected[t] = true;
                break;
            }
            first = false;
            if cols.iter().all(|&j| s[j] > 0.0) {
                u = s;
                rejected.iter_mut().for_each(|r| *r = false);
                break;
            }
            let mut alpha = f64::INFINITY;
            for &j in &cols {
                if s[j] <= 0.0 {
                    let step = u[j] / (u[j] - s[j]);
                    if step < alpha {
                        alpha = step;
                    }
                }
            }
            u += (&s - &u) * alpha;
            for &j in &cols {
                if u[j] <= 1e-15 * (1.0 + u.amax()) {
                    u[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    let residual_vector = a * &u - b;
    let residual_norm = residual_vector.norm();
    Ok(NnlsResult {
        solution: u,
        residual_vector,
        residual_norm,
        iterations,
    })
}

/// `min ½‖z‖²` subject to `G z + g ≥ 0` through its NNLS dual.
pub fn solve_ldp(
    g_mat: &DMatrix<f64>,
    g_vec: &DVector<f64>,
    options: &LdpOptions,
) -> Result<LdpResult, LsqError> {
    let (mi, np) = g_mat.shape();
    if np == 0 {
        return Err(LsqError::Contract("ldp needs at least one variable".into()));
    }
    if g_vec.len() != mi {
        return Err(LsqError::Contract("ldp dimension mismatch".into()));
    }
    if mi == 0 {
        return Ok(LdpResult {
            point: DVector::zeros(np),
            reliable: true,
            last_residual: 1.0,
            error_bound: options.assumed_eps,
            multipliers: DVector::zeros(0),
        });
    }
    let mut a = DMatrix::zeros(np + 1, mi);
    a.view_mut((0, 0), (np, mi)).copy_from(&g_mat.transpose());
    for j in 0..mi {
        a[(np, j)] = -g_vec[j];
    }
    let mut b = DVector::zeros(np + 1);
    b[np] = 1.0;
    let nnls = solve_nnls(&a, &b)?;
    let u = &nnls.solution;
    let au_last = a.row(np).dot(&u.transpose()) * (1.0 - options.perturb_last);
    let rho = 1.0 - au_last;
    if !(rho > 0.0) || nnls.residual_norm == 0.0 {
        return Err(LsqError::Infeasible);
    }
    // z_i = −r_i / r_{n'+1} with r_{n'+1} = −ρ
    let point = nnls.residual_vector.rows(0, np) / rho;
    let error_bound = dual_error_bound(options.assumed_eps, rho)?;
    Ok(LdpResult {
        point,
        reliable: rho >= options.guard_floor,
        last_residual: rho,
        error_bound,
        multipliers: u / rho,
    })
}

/// Least-norm `z` with `G_A z + g_A = 0` on the rows carrying a positive
/// multiplier, which is the LDP optimum when that active set is right.
fn active_rows_point(g_mat: &DMatrix<f64>, g_vec: &DVector<f64>, mult: &DVector<f64>) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..mult.len()).filter(|&i| mult[i] > 0.0).collect();
    if active.is_empty() {
        return Some(DVector::zeros(g_mat.ncols()));
    }
    let mut ga = DMatrix::zeros(active.len(), g_mat.ncols());
    for (k, &i) in active.iter().enumerate() {
        ga.set_row(k, &g_mat.row(i));
    }
    let rhs = DVector::from_iterator(active.len(), active.iter().map(|&i| -g_vec[i]));
    ga.svd(true, true).solve(&rhs, 1e-12).ok()
}

/// `min ‖E d − f‖` subject to `G d + g ≥ 0`, `E` of full column rank.
pub fn solve_lsi(
    obj_matrix: &DMatrix<f64>,
    obj_target: &DVector<f64>,
    g_mat: &DMatrix<f64>,
    g_vec: &DVector<f64>,
    options: &LdpOptions,
) -> Result<LsiResult, LsqError> {
    let (me, n) = obj_matrix.shape();
    if me < n || obj_target.len() != me || g_mat.ncols() != n || g_mat.nrows() != g_vec.len() {
        return Err(LsqError::Contract("lsi dimension mismatch".into()));
    }
    let qr = obj_matrix.clone().qr();
    let (q, r) = qr.unpack();
    let f1 = q.tr_mul(obj_target);
    let diag_max = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..n).any(|i| r[(i, i)].abs() <= 1e-14 * diag_max) || diag_max == 0.0 {
        return Err(LsqError::Contract("objective matrix is rank deficient".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| LsqError::Contract("objective matrix is singular".into()))?;
    // d = R⁻¹ (z + f1)
    let g_tilde = g_mat * &r_inv;
    let g_shift = g_vec + &g_tilde * &f1;
    let ldp = solve_ldp(&g_tilde, &g_shift, options)?;
    let feasible = |d: &DVector<f64>| {
        let scale = 1.0 + g_vec.amax() + g_mat.amax() * d.amax();
        (g_mat * d + g_vec).iter().all(|&v| v >= -1e-7 * scale)
    };
    let mut solution = &r_inv * (&ldp.point + &f1);
    let mut reliable = ldp.reliable;
    if reliable && g_mat.nrows() > 0 && !feasible(&solution) {
        // z = r/ρ amplifies rounding in the dual residual. The active set is
        // still right, so re-solve the primal on it.
        reliable = false;
        if let Some(z) = active_rows_point(&g_tilde, &g_shift, &ldp.multipliers) {
            let d = &r_inv * (z + &f1);
            if feasible(&d) {
                solution = d;
                reliable = true;
            }
        }
    }
    Ok(LsiResult {
        solution,
        multipliers: ldp.multipliers,
        reliable,
        last_residual: ldp.last_residual,
        error_bound: ldp.error_bound,
    })
}

/// `min ½‖R d − q‖²` subject to `A_E d + h = 0`, `A_I d + g ≥ 0`.
///
/// An unreliable dual verdict is returned as [`LsqError::Unreliable`].
pub fn solve_lsq(
    r: &DMatrix<f64>,
    q: &DVector<f64>,
    eq_jacobian: &DMatrix<f64>,
    eq_values: &DVector<f64>,
    ineq_jacobian: &DMatrix<f64>,
    ineq_values: &DVector<f64>,
    options: &LdpOptions,
) -> Result<LsqSolution, LsqError> {
    let n = r.ncols();
    let me = eq_jacobian.nrows();
    let mi = ineq_jacobian.nrows();
    if q.len() != r.nrows()
        || eq_jacobian.ncols() != n
        || ineq_jacobian.ncols() != n
        || eq_values.len() != me
        || ineq_values.len() != mi
    {
        return Err(LsqError::Contract("lsq dimension mismatch".into()));
    }
    let elim = eliminate_equalities(eq_jacobian, &(-eq_values))?;
    let xp = &elim.particular_solution;
    let z = &elim.basis;
    let np = z.ncols();

    let (direction, ineq_mult, last_residual, error_bound) = if np == 0 {
        let res = ineq_jacobian * xp + ineq_values;
        let scale = 1.0 + ineq_values.amax();
        if res.iter().any(|&v| v < -1e-9 * scale) {
            return Err(LsqError::Infeasible);
        }
        (xp.clone(), DVector::zeros(mi), 1.0, options.assumed_eps)
    } else {
        let e = r * z;
        let f = q - r * xp;
        let gz = ineq_jacobian * z;
        let gs = ineq_values + ineq_jacobian * xp;
        let lsi = solve_lsi(&e, &f, &gz, &gs, options)?;
        if !lsi.reliable {
            return Err(LsqError::Unreliable {
                last_residual: lsi.last_residual,
                error_bound: lsi.error_bound,
            });
        }
        (xp + z * &lsi.solution, lsi.multipliers, lsi.last_residual, lsi.error_bound)
    };

    // Rᵀ(R d − q) = A_Eᵀ λ + A_Iᵀ μ
    let stat = r.tr_mul(&(r * &direction - q)) - ineq_jacobian.tr_mul(&ineq_mult);
    let eq_mult = elim.solve_transposed(&stat);

    let active_ineq: Vec<usize> = (0..mi).filter(|&j| ineq_mult[j] > 0.0).collect();
    let mut rows = DMatrix::zeros(me + active_ineq.len(), n);
    for i in 0..me {
        rows.set_row(i, &eq_jacobian.row(i));
    }
    for (k, &j) in active_ineq.iter().enumerate() {
        rows.set_row(me + k, &ineq_jacobian.row(j));
    }
    let active_condition = if rows.nrows() == 0 {
        1.0
    } else {
        condition_number(&rows)
    };
    Ok(LsqSolution {
        direction,
        eq_multipliers: eq_mult,
        ineq_multipliers: ineq_mult,
        active_ineq,
        active_condition,
        last_residual,
        error_bound,
    })
}
