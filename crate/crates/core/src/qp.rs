//! Primal active-set solver for strictly convex QPs.
//!
//! ```text
//! min ½ dᵀ H d + cᵀ d
//! s.t. A_E d + b_E  = 0
//!      A_I d + b_I ≥ 0
//!      lo ≤ d ≤ up            (optional)
//! ```
//!
//! A feasible start comes from the minimum-norm solution of the equality
//! rows. When that violates an inequality, a regularized elastic phase 1
//! (same machinery, Hessian `δ·I`, unit penalty on the violations of the
//! initially violated rows) either finds a feasible point or certifies
//! infeasibility with the row of largest residual at the best point found.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{condition_number, eliminate_equalities};

/// Phase-1 regularization weight.
const PHASE1_DELTA: f64 = 1e-6;
/// Iteration cap factor: the loop stops after `50·(n + m_E + m_I)` steps.
const STALL_FACTOR: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct VariableBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpData {
    pub hessian: DMatrix<f64>,
    pub linear_term: DVector<f64>,
    /// `m_E × n`, one constraint gradient per row.
    pub eq_jacobian: DMatrix<f64>,
    pub eq_values: DVector<f64>,
    /// `m_I × n`, one constraint gradient per row.
    pub ineq_jacobian: DMatrix<f64>,
    pub ineq_values: DVector<f64>,
    pub bounds: Option<VariableBounds>,
}

impl QpData {
    /// Unconstrained problem with the given Hessian and gradient.
    pub fn unconstrained(hessian: DMatrix<f64>, linear_term: DVector<f64>) -> Self {
        let n = linear_term.len();
        QpData {
            hessian,
            linear_term,
            eq_jacobian: DMatrix::zeros(0, n),
            eq_values: DVector::zeros(0),
            ineq_jacobian: DMatrix::zeros(0, n),
            ineq_values: DVector::zeros(0),
            bounds: None,
        }
    }

    pub fn with_equalities(mut self, jac: DMatrix<f64>, values: DVector<f64>) -> Self {
        self.eq_jacobian = jac;
        self.eq_values = values;
        self
    }

    pub fn with_inequalities(mut self, jac: DMatrix<f64>, values: DVector<f64>) -> Self {
        self.ineq_jacobian = jac;
        self.ineq_values = values;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.bounds = Some(VariableBounds { lower, upper });
        self
    }

    pub fn dim(&self) -> usize {
        self.linear_term.len()
    }

    pub fn objective(&self, d: &DVector<f64>) -> f64 {
        0.5 * d.dot(&(&self.hessian * d)) + self.linear_term.dot(d)
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        let bad = |what: &str| Err(QpError::Contract(format!("dimension mismatch: {what}")));
        if self.hessian.shape() != (n, n) {
            return bad("hessian");
        }
        if self.eq_jacobian.ncols() != n || self.eq_jacobian.nrows() != self.eq_values.len() {
            return bad("equality rows");
        }
        if self.ineq_jacobian.ncols() != n || self.ineq_jacobian.nrows() != self.ineq_values.len()
        {
            return bad("inequality rows");
        }
        if let Some(b) = &self.bounds {
            if b.lower.len() != n || b.upper.len() != n {
                return bad("bounds");
            }
        }
        let scale = 1.0 + self.hessian.amax();
        for i in 0..n {
            for j in 0..i {
                if (self.hessian[(i, j)] - self.hessian[(j, i)]).abs() > 1e-10 * scale {
                    return Err(QpError::Contract("hessian is not symmetric".into()));
                }
            }
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        let bmax = self.eq_values.amax().max(self.ineq_values.amax());
        1.0 + bmax
    }
}

/// Identifies one constraint row of a [`QpData`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintRef {
    Equality(usize),
    Inequality(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub direction: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub lower_multipliers: DVector<f64>,
    pub upper_multipliers: DVector<f64>,
    pub active_set: Vec<ConstraintRef>,
    pub objective_value: f64,
    /// Condition number of the active-constraint Jacobian (1 when empty).
    pub active_condition: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    /// Row with the largest residual at the least-infeasible point found.
    pub constraint: ConstraintRef,
    pub violation: f64,
    pub total_violation: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QpError {
    #[error("infeasible QP (worst row {:?}, violation {:e})", .0.constraint, .0.violation)]
    Infeasible(InfeasibilityCertificate),
    #[error("active-set iteration stalled after {iterations} steps")]
    Stalled { iterations: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Default)]
pub struct QpOptions {
    /// Candidate working set from a previous solve.
    pub warm_start: Option<Vec<ConstraintRef>>,
}

/// Constraint rows flattened into one matrix, equalities first.
struct RowSet {
    a: DMatrix<f64>,
    b: DVector<f64>,
    refs: Vec<ConstraintRef>,
    n_eq: usize,
}

impl RowSet {
    fn from_data(data: &QpData) -> Self {
        let n = data.dim();
        let mut rows: Vec<(Vec<f64>, f64, ConstraintRef)> = Vec::new();
        for i in 0..data.eq_jacobian.nrows() {
            rows.push((
                data.eq_jacobian.row(i).iter().cloned().collect(),
                data.eq_values[i],
                ConstraintRef::Equality(i),
            ));
        }
        for i in 0..data.ineq_jacobian.nrows() {
            rows.push((
                data.ineq_jacobian.row(i).iter().cloned().collect(),
                data.ineq_values[i],
                ConstraintRef::Inequality(i),
            ));
        }
        if let Some(bd) = &data.bounds {
            for i in 0..n {
                if bd.lower[i].is_finite() {
                    let mut r = vec![0.0; n];
                    r[i] = 1.0;
                    rows.push((r, -bd.lower[i], ConstraintRef::Lower(i)));
                }
            }
            for i in 0..n {
                if bd.upper[i].is_finite() {
                    let mut r = vec![0.0; n];
                    r[i] = -1.0;
                    rows.push((r, bd.upper[i], ConstraintRef::Upper(i)));
                }
            }
        }
        let m = rows.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        let mut refs = Vec::with_capacity(m);
        for (k, (r, bv, rf)) in rows.into_iter().enumerate() {
            for (j, v) in r.into_iter().enumerate() {
                a[(k, j)] = v;
            }
            b[k] = bv;
            refs.push(rf);
        }
        RowSet {
            a,
            b,
            refs,
            n_eq: data.eq_jacobian.nrows(),
        }
    }
}

/// Generic primal active-set loop over a [`RowSet`]-like description.
struct ActiveSet<'a> {
    h: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    /// Rows `0..n_eq` are equalities and stay in the working set.
    n_eq: usize,
}

struct LoopResult {
    x: DVector<f64>,
    working: Vec<usize>,
    /// One entry per row (zero for rows outside the working set).
    multipliers: DVector<f64>,
    iterations: usize,
}

impl ActiveSet<'_> {
    fn kkt_solve(&self, x: &DVector<f64>, working: &[usize]) -> (DVector<f64>, DVector<f64>) {
        let n = x.len();
        let w = working.len();
        let mut k = DMatrix::zeros(n + w, n + w);
        k.view_mut((0, 0), (n, n)).copy_from(self.h);
        for (col, &row) in working.iter().enumerate() {
            for j in 0..n {
                let v = self.a[(row, j)];
                k[(j, n + col)] = -v;
                k[(n + col, j)] = v;
            }
        }
        let g = self.h * x + self.c;
        let mut rhs = DVector::zeros(n + w);
        for j in 0..n {
            rhs[j] = -g[j];
        }
        let sol = match k.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => k
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(n + w)),
        };
        let p = sol.rows(0, n).into_owned();
        let mu = sol.rows(n, w).into_owned();
        (p, mu)
    }

    fn run(
        &self,
        x0: DVector<f64>,
        mut working: Vec<usize>,
        max_iter: usize,
    ) -> Result<LoopResult, QpError> {
        let m = self.a.nrows();
        let mut x = x0;
        let mut at_min = false;
        let mut zero_steps = 0usize;
        let row_norms: Vec<f64> = (0..m).map(|k| self.a.row(k).norm()).collect();
        for iter in 0..max_iter {
            let (p, mu) = self.kkt_solve(&x, &working);
            let pnorm = p.amax();
            // A full-rank working set leaves no null space, so any p is rounding.
            let pinned = working.len() >= x.len()
                && crate::numkit::numerical_rank(&select_rows(self.a, &working), 1e-10) >= x.len();
            let small = pinned || pnorm <= 1e-13 * (1.0 + x.amax());
            if at_min || small {
                let gscale = 1.0 + (self.h * &x + self.c).amax();
                let tol = 1e-12 * gscale;
                // Dantzig choice, switching to Bland after a run of null steps.
                let bland = zero_steps > m + x.len();
                let mut drop: Option<(usize, f64)> = None;
                for (pos, &row) in working.iter().enumerate() {
                    if row < self.n_eq || mu[pos] >= -tol {
                        continue;
                    }
                    let better = match drop {
                        None => true,
                        Some((_, best)) => !bland && mu[pos] < best,
                    };
                    if better {
                        drop = Some((pos, mu[pos]));
                    }
                }
                match drop {
                    None => {
                        let mut multipliers = DVector::zeros(m);
                        for (pos, &row) in working.iter().enumerate() {
                            multipliers[row] = if row < self.n_eq { mu[pos] } else { mu[pos].max(0.0) };
                        }
                        return Ok(LoopResult {
                            x,
                            working,
                            multipliers,
                            iterations: iter,
                        });
                    }
                    Some((pos, _)) => {
                        working.remove(pos);
                        at_min = false;
                        continue;
                    }
                }
            }
            // ratio test over inactive inequality rows
            let mut alpha = 1.0;
            let mut blocking: Option<usize> = None;
            for k in self.n_eq..m {
                if working.contains(&k) {
                    continue;
                }
                let ap = self.a.row(k).dot(&p.transpose());
                if ap >= -1e-14 * row_norms[k] * p.norm() {
                    continue;
                }
                let r = self.a.row(k).dot(&x.transpose()) + self.b[k];
                let step = r.max(0.0) / (-ap);
                if step < alpha {
                    alpha = step;
                    blocking = Some(k);
                }
            }
            x += &p * alpha;
            match blocking {
                Some(k) => {
                    let pos = working.partition_point(|&w| w < k);
                    working.insert(pos, k);
                    at_min = false;
                    if alpha == 0.0 {
                        zero_steps += 1;
                    } else {
                        zero_steps = 0;
                    }
                }
                None => {
                    at_min = true;
                    zero_steps = 0;
                }
            }
        }
        Err(QpError::Stalled {
            iterations: max_iter,
        })
    }
}

pub fn solve_qp(data: &QpData) -> Result<QpSolution, QpError> {
    solve_qp_with(data, &QpOptions::default())
}

pub fn solve_qp_with(data: &QpData, options: &QpOptions) -> Result<QpSolution, QpError> {
    data.validate()?;
    let n = data.dim();
    let rows = RowSet::from_data(data);
    let m = rows.a.nrows();
    let max_iter = STALL_FACTOR * (n + m).max(1);
    let feas_tol = 1e-9 * data.scale();

    // equality rows: minimum-norm point and an independent subset
    let a_eq = rows.a.rows(0, rows.n_eq).into_owned();
    let b_eq = rows.b.rows(0, rows.n_eq).into_owned();
    let (x_eq, eq_keep) = if rows.n_eq > 0 {
        match eliminate_equalities(&a_eq, &(-&b_eq)) {
            Ok(e) => (e.particular_solution.clone(), e.independent_rows.clone()),
            Err(_) => return Err(QpError::Infeasible(eq_certificate(&a_eq, &b_eq))),
        }
    } else {
        (DVector::zeros(n), Vec::new())
    };

    // Compact row set with redundant equalities removed.
    let keep: Vec<usize> = eq_keep
        .iter()
        .cloned()
        .chain(rows.n_eq..m)
        .collect();
    let a = select_rows(&rows.a, &keep);
    let b = DVector::from_iterator(keep.len(), keep.iter().map(|&k| rows.b[k]));
    let n_eq = eq_keep.len();
    let engine = ActiveSet {
        h: &data.hessian,
        c: &data.linear_term,
        a: &a,
        b: &b,
        n_eq,
    };

    let eq_working: Vec<usize> = (0..n_eq).collect();
    let start = warm_start(&engine, options, &rows.refs, &keep, feas_tol)
        .map(Ok)
        .unwrap_or_else(|| {
            let violated = (n_eq..keep.len())
                .any(|k| a.row(k).dot(&x_eq.transpose()) + b[k] < -feas_tol);
            if violated {
                phase_one(&a, &b, n_eq, &x_eq, feas_tol, max_iter).map(|x| (x, eq_working.clone()))
            } else {
                Ok((x_eq.clone(), eq_working.clone()))
            }
        });
    let (x_start, w_start) = match start {
        Ok(s) => s,
        Err(PhaseOneFailure::Infeasible { row, violation, total }) => {
            return Err(QpError::Infeasible(InfeasibilityCertificate {
                constraint: rows.refs[keep[row]],
                violation,
                total_violation: total,
            }))
        }
        Err(PhaseOneFailure::Qp(e)) => return Err(e),
    };

    let res = engine.run(x_start, w_start, max_iter)?;
    let d = res.x;

    let mut eq_mult = DVector::zeros(data.eq_jacobian.nrows());
    let mut ineq_mult = DVector::zeros(data.ineq_jacobian.nrows());
    let mut lo_mult = DVector::zeros(n);
    let mut up_mult = DVector::zeros(n);
    let mut active_set = Vec::new();
    // All equalities are active, including dropped redundant ones.
    for i in 0..rows.n_eq {
        active_set.push(ConstraintRef::Equality(i));
    }
    for &k in &res.working {
        let rf = rows.refs[keep[k]];
        let mu = res.multipliers[k];
        match rf {
            ConstraintRef::Equality(i) => eq_mult[i] = mu,
            ConstraintRef::Inequality(i) => {
                ineq_mult[i] = mu;
                active_set.push(rf);
            }
            ConstraintRef::Lower(i) => {
                lo_mult[i] = mu;
                active_set.push(rf);
            }
            ConstraintRef::Upper(i) => {
                up_mult[i] = mu;
                active_set.push(rf);
            }
        }
    }
    active_set.sort();
    let active_condition = if res.working.is_empty() {
        1.0
    } else {
        condition_number(&select_rows(&a, &res.working))
    };
    Ok(QpSolution {
        objective_value: data.objective(&d),
        direction: d,
        eq_multipliers: eq_mult,
        ineq_multipliers: ineq_mult,
        lower_multipliers: lo_mult,
        upper_multipliers: up_mult,
        active_set,
        active_condition,
        iterations: res.iterations,
    })
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), a.ncols());
    for (i, &k) in rows.iter().enumerate() {
        out.set_row(i, &a.row(k));
    }
    out
}

fn eq_certificate(a_eq: &DMatrix<f64>, b_eq: &DVector<f64>) -> InfeasibilityCertificate {
    let rhs = -b_eq;
    let x = a_eq
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(a_eq.ncols()));
    let res = a_eq * x - rhs;
    let (row, violation) = res
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.abs()))
        .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
    InfeasibilityCertificate {
        constraint: ConstraintRef::Equality(row),
        violation,
        total_violation: res.iter().map(|r| r.abs()).sum(),
    }
}

/// Equality-constrained solve on the suggested working set; accepted only
/// when the resulting point is feasible.
fn warm_start(
    engine: &ActiveSet<'_>,
    options: &QpOptions,
    refs: &[ConstraintRef],
    keep: &[usize],
    feas_tol: f64,
) -> Option<(DVector<f64>, Vec<usize>)> {
    let suggested = options.warm_start.as_ref()?;
    let n = engine.c.len();
    let mut working: Vec<usize> = (0..engine.n_eq).collect();
    for (pos, &orig) in keep.iter().enumerate().skip(engine.n_eq) {
        if suggested.contains(&refs[orig]) {
            working.push(pos);
        }
    }
    if working.len() > n {
        return None;
    }
    let wa = select_rows(engine.a, &working);
    if crate::numkit::numerical_rank(&wa, 1e-10) < working.len() {
        return None;
    }
    // Solve min q(x) s.t. working rows hold with equality.
    let wb = DVector::from_iterator(working.len(), working.iter().map(|&k| engine.b[k]));
    let elim = eliminate_equalities(&wa, &(-wb)).ok()?;
    let x0 = elim.particular_solution.clone();
    let (p, _) = engine.kkt_solve(&x0, &working);
    let x = x0 + p;
    let feasible = (engine.n_eq..engine.a.nrows())
        .all(|k| engine.a.row(k).dot(&x.transpose()) + engine.b[k] >= -feas_tol);
    feasible.then_some((x, working))
}

enum PhaseOneFailure {
    Infeasible { row: usize, violation: f64, total: f64 },
    Qp(QpError),
}

/// Elastic phase 1 on the rows violated at `x0`; returns a feasible point.
fn phase_one(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    n_eq: usize,
    x0: &DVector<f64>,
    feas_tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, PhaseOneFailure> {
    let n = x0.len();
    let m = a.nrows();
    let residual = |k: usize, x: &DVector<f64>| a.row(k).dot(&x.transpose()) + b[k];
    let violated: Vec<usize> = (n_eq..m).filter(|&k| residual(k, x0) < -feas_tol).collect();
    let ne = violated.len();
    let nv = n + ne;
    // rows: equalities, every inequality (elastic ones carry +v_j), v ≥ 0
    let mut pa = DMatrix::zeros(m + ne, nv);
    let mut pb = DVector::zeros(m + ne);
    let mut start = DVector::zeros(nv);
    start.rows_mut(0, n).copy_from(x0);
    for k in 0..m {
        let norm = a.row(k).norm();
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        for j in 0..n {
            pa[(k, j)] = a[(k, j)] * s;
        }
        pb[k] = b[k] * s;
        if let Some(e) = violated.iter().position(|&v| v == k) {
            pa[(k, n + e)] = 1.0;
            start[n + e] = -(residual(k, x0) * s);
        }
    }
    for e in 0..ne {
        pa[(m + e, n + e)] = 1.0;
    }
    let h = DMatrix::identity(nv, nv) * PHASE1_DELTA;
    let mut c = DVector::zeros(nv);
    for j in 0..n {
        c[j] = -PHASE1_DELTA * x0[j];
    }
    for e in 0..ne {
        c[n + e] = 1.0;
    }
    let engine = ActiveSet {
        h: &h,
        c: &c,
        a: &pa,
        b: &pb,
        n_eq,
    };
    let res = engine
        .run(start, (0..n_eq).collect(), max_iter)
        .map_err(PhaseOneFailure::Qp)?;
    let x = res.x.rows(0, n).into_owned();
    let mut worst = (0usize, 0.0_f64);
    let mut total = 0.0;
    for k in n_eq..m {
        let v = (-residual(k, &x)).max(0.0);
        total += v;
        if v > worst.1 {
            worst = (k, v);
        }
    }
    if worst.1 > feas_tol {
        Err(PhaseOneFailure::Infeasible {
            row: worst.0,
            violation: worst.1,
            total,
        })
    } else {
        Ok(x)
    }
}

/// Max-norm residuals of stationarity, primal feasibility and complementarity.
pub fn kkt_residuals(data: &QpData, sol: &QpSolution) -> (f64, f64, f64) {
    let d = &sol.direction;
    let mut grad = &data.hessian * d + &data.linear_term;
    grad -= data.eq_jacobian.tr_mul(&sol.eq_multipliers);
    grad -= data.ineq_jacobian.tr_mul(&sol.ineq_multipliers);
    grad -= &sol.lower_multipliers;
    grad += &sol.upper_multipliers;
    let stationarity = grad.amax();

    let mut feas: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let eq_res = &data.eq_jacobian * d + &data.eq_values;
    feas = feas.max(eq_res.amax());
    let in_res = &data.ineq_jacobian * d + &data.ineq_values;
    for (j, r) in in_res.iter().enumerate() {
        feas = feas.max((-r).max(0.0));
        comp = comp.max((sol.ineq_multipliers[j] * r).abs());
        feas = feas.max((-sol.ineq_multipliers[j]).max(0.0));
    }
    if let Some(bd) = &data.bounds {
        for i in 0..d.len() {
            if bd.lower[i].is_finite() {
                let r = d[i] - bd.lower[i];
                feas = feas.max((-r).max(0.0));
                comp = comp.max((sol.lower_multipliers[i] * r).abs());
            }
            if bd.upper[i].is_finite() {
                let r = bd.upper[i] - d[i];
                feas = feas.max((-r).max(0.0));
                comp = comp.max((sol.upper_multipliers[i] * r).abs());
            }
        }
    }
    (stationarity, feas, comp)
}

impl QpSolution {
    pub fn is_active(&self, c: ConstraintRef) -> bool {
        self.active_set.binary_search(&c).is_ok()
    }
}
