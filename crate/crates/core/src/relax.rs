//! Relaxed subproblems and the hybrid switching strategy.
//!
//! Mode 1 adds a scalar `ξ ∈ [0, 1]` that scales back equality values and
//! violated inequality values. Mode 2 adds elementwise slacks `s, t, v ≥ 0`
//! with quadratic and linear penalties. [`hybrid_solve`] decides which one
//! to try when the original subproblem has no solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lsq::{solve_lsq, LdpOptions, LsqError, LsqSolution};
use crate::qp::{solve_qp, QpData, QpError, QpSolution};

/// Below this max-norm a direction counts as zero. The dual pipeline
/// leaves round-off of order `1e-14` in directions that are zero exactly.
pub const ZERO_DIRECTION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    Qp,
    Rqp1,
    Rqp2,
    Lsq,
    Rlsq1,
    Rlsq2,
}

impl Formulation {
    /// 0 for the original problem, 1 and 2 for the relaxations.
    pub fn level(self) -> usize {
        match self {
            Formulation::Qp | Formulation::Lsq => 0,
            Formulation::Rqp1 | Formulation::Rlsq1 => 1,
            Formulation::Rqp2 | Formulation::Rlsq2 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Qp => "qp",
            Formulation::Rqp1 => "rqp1",
            Formulation::Rqp2 => "rqp2",
            Formulation::Lsq => "lsq",
            Formulation::Rlsq1 => "rlsq1",
            Formulation::Rlsq2 => "rlsq2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slacks {
    pub s: DVector<f64>,
    pub t: DVector<f64>,
    pub v: DVector<f64>,
}

/// Direction and multipliers for the original constraint rows, whichever
/// formulation produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemOutcome {
    pub direction: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub formulation: Formulation,
    pub xi: Option<f64>,
    pub slacks: Option<Slacks>,
    /// `κ_A` of the active rows of the problem actually solved.
    pub active_condition: f64,
    pub reliable: bool,
    /// Dual last residual, least-squares family only.
    pub last_residual: Option<f64>,
}

pub type RelaxedOutcome = SubproblemOutcome;

/// Linearized constraints at the current iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub grad_f: DVector<f64>,
    pub eq_jacobian: DMatrix<f64>,
    pub eq_values: DVector<f64>,
    pub ineq_jacobian: DMatrix<f64>,
    pub ineq_values: DVector<f64>,
}

impl Linearization {
    pub fn n(&self) -> usize {
        self.grad_f.len()
    }

    pub fn qp_data(&self, hessian: &DMatrix<f64>) -> QpData {
        QpData::unconstrained(hessian.clone(), self.grad_f.clone())
            .with_equalities(self.eq_jacobian.clone(), self.eq_values.clone())
            .with_inequalities(self.ineq_jacobian.clone(), self.ineq_values.clone())
    }
}

/// Relaxation constants shared by both families.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxParams {
    pub powell_m: f64,
    pub nowak_m: f64,
    pub w1: Option<DVector<f64>>,
    pub w2: Option<DVector<f64>>,
}

impl Default for RelaxParams {
    fn default() -> Self {
        RelaxParams {
            powell_m: 1e4,
            nowak_m: 1e4,
            w1: None,
            w2: None,
        }
    }
}

impl RelaxParams {
    fn weights(&self, me: usize, mi: usize) -> (DVector<f64>, DVector<f64>) {
        let pick = |w: &Option<DVector<f64>>, m: usize| match w {
            Some(w) if w.len() == m => w.clone(),
            _ => DVector::from_element(m, 1.0),
        };
        (pick(&self.w1, me), pick(&self.w2, mi))
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineFailure {
    #[error("subproblem infeasible")]
    Infeasible,
    #[error("dual solution unreliable (last residual {last_residual:e})")]
    Unreliable { last_residual: f64, error_bound: f64 },
    #[error("subproblem solver failed: {0}")]
    Failed(String),
}

impl From<QpError> for EngineFailure {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Infeasible(_) => EngineFailure::Infeasible,
            other => EngineFailure::Failed(other.to_string()),
        }
    }
}

impl From<LsqError> for EngineFailure {
    fn from(e: LsqError) -> Self {
        match e {
            LsqError::Infeasible | LsqError::InconsistentEqualities { .. } => EngineFailure::Infeasible,
            LsqError::Unreliable {
                last_residual,
                error_bound,
            } => EngineFailure::Unreliable {
                last_residual,
                error_bound,
            },
            other => EngineFailure::Failed(other.to_string()),
        }
    }
}

/// `C_jj = 1` where `g_j ≤ 0`, zero elsewhere.
pub fn build_c_matrix(ineq_values: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&ineq_values.map(|g| if g <= 0.0 { 1.0 } else { 0.0 }))
}

fn rqp1_rows(
    a_e: &DMatrix<f64>,
    b_e: &DVector<f64>,
    a_i: &DMatrix<f64>,
    b_i: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a_e.ncols();
    let (me, mi) = (a_e.nrows(), a_i.nrows());
    let mut eq = DMatrix::zeros(me, n + 1);
    eq.view_mut((0, 0), (me, n)).copy_from(a_e);
    eq.set_column(n, &(-b_e));
    let cg = build_c_matrix(b_i) * b_i;
    let mut ineq = DMatrix::zeros(mi, n + 1);
    ineq.view_mut((0, 0), (mi, n)).copy_from(a_i);
    ineq.set_column(n, &(-cg));
    (eq, ineq)
}

fn rqp2_rows(a_e: &DMatrix<f64>, a_i: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a_e.ncols();
    let (me, mi) = (a_e.nrows(), a_i.nrows());
    let nv = n + 2 * me + mi;
    let mut eq = DMatrix::zeros(me, nv);
    eq.view_mut((0, 0), (me, n)).copy_from(a_e);
    for j in 0..me {
        eq[(j, n + j)] = -1.0;
        eq[(j, n + me + j)] = 1.0;
    }
    let mut ineq = DMatrix::zeros(mi, nv);
    ineq.view_mut((0, 0), (mi, n)).copy_from(a_i);
    for j in 0..mi {
        ineq[(j, n + 2 * me + j)] = 1.0;
    }
    (eq, ineq)
}

fn block_diag(a: &DMatrix<f64>, tail: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n + tail.len(), a.ncols() + tail.len());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    for (k, &v) in tail.iter().enumerate() {
        out[(n + k, a.ncols() + k)] = v;
    }
    out
}

fn split_slacks(z: &DVector<f64>, n: usize, me: usize, mi: usize) -> Slacks {
    Slacks {
        s: z.rows(n, me).into_owned(),
        t: z.rows(n + me, me).into_owned(),
        v: z.rows(n + 2 * me, mi).into_owned(),
    }
}

fn qp_outcome(sol: &QpSolution, n: usize, formulation: Formulation) -> SubproblemOutcome {
    SubproblemOutcome {
        direction: sol.direction.rows(0, n).into_owned(),
        eq_multipliers: sol.eq_multipliers.clone(),
        ineq_multipliers: sol.ineq_multipliers.clone(),
        formulation,
        xi: None,
        slacks: None,
        active_condition: sol.active_condition,
        reliable: true,
        last_residual: None,
    }
}

/// Powell-style relaxation in QP form. `data.bounds` must be unset.
pub fn solve_rqp1(data: &QpData, m: f64) -> Result<RelaxedOutcome, EngineFailure> {
    if data.bounds.is_some() {
        return Err(EngineFailure::Failed("rqp1 expects unbounded data".into()));
    }
    let n = data.dim();
    let (eq, ineq) = rqp1_rows(&data.eq_jacobian, &data.eq_values, &data.ineq_jacobian, &data.ineq_values);
    let mut lo = DVector::from_element(n + 1, f64::NEG_INFINITY);
    let mut up = DVector::from_element(n + 1, f64::INFINITY);
    lo[n] = 0.0;
    up[n] = 1.0;
    let mut c = DVector::zeros(n + 1);
    c.rows_mut(0, n).copy_from(&data.linear_term);
    let aug = QpData::unconstrained(block_diag(&data.hessian, &[m]), c)
        .with_equalities(eq, data.eq_values.clone())
        .with_inequalities(ineq, data.ineq_values.clone())
        .with_bounds(lo, up);
    let sol = solve_qp(&aug)?;
    let mut out = qp_outcome(&sol, n, Formulation::Rqp1);
    out.xi = Some(sol.direction[n].clamp(0.0, 1.0));
    Ok(out)
}

/// Elastic relaxation in QP form with quadratic weight `m_prime` and
/// linear weights `w1` (equalities) and `w2` (inequalities).
pub fn solve_rqp2(
    data: &QpData,
    m_prime: f64,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
) -> Result<RelaxedOutcome, EngineFailure> {
    if data.bounds.is_some() {
        return Err(EngineFailure::Failed("rqp2 expects unbounded data".into()));
    }
    let n = data.dim();
    let (me, mi) = (data.eq_values.len(), data.ineq_values.len());
    if w1.len() != me || w2.len() != mi || !(m_prime > 0.0) {
        return Err(EngineFailure::Failed("rqp2 weight mismatch".into()));
    }
    let ns = 2 * me + mi;
    let (eq, ineq) = rqp2_rows(&data.eq_jacobian, &data.ineq_jacobian);
    let mut c = DVector::zeros(n + ns);
    c.rows_mut(0, n).copy_from(&data.linear_term);
    c.rows_mut(n, me).copy_from(w1);
    c.rows_mut(n + me, me).copy_from(w1);
    c.rows_mut(n + 2 * me, mi).copy_from(w2);
    let mut lo = DVector::from_element(n + ns, 0.0);
    lo.rows_mut(0, n).fill(f64::NEG_INFINITY);
    let up = DVector::from_element(n + ns, f64::INFINITY);
    let aug = QpData::unconstrained(block_diag(&data.hessian, &vec![m_prime; ns]), c)
        .with_equalities(eq, data.eq_values.clone())
        .with_inequalities(ineq, data.ineq_values.clone())
        .with_bounds(lo, up);
    let sol = solve_qp(&aug)?;
    let mut out = qp_outcome(&sol, n, Formulation::Rqp2);
    out.slacks = Some(split_slacks(&sol.direction, n, me, mi).clamp_nonneg());
    Ok(out)
}

impl Slacks {
    fn clamp_nonneg(mut self) -> Self {
        for x in self.s.iter_mut().chain(self.t.iter_mut()).chain(self.v.iter_mut()) {
            *x = x.max(0.0);
        }
        self
    }
}

fn lsq_outcome(sol: &LsqSolution, n: usize, me: usize, mi: usize, formulation: Formulation) -> SubproblemOutcome {
    SubproblemOutcome {
        direction: sol.direction.rows(0, n).into_owned(),
        eq_multipliers: sol.eq_multipliers.rows(0, me).into_owned(),
        ineq_multipliers: sol.ineq_multipliers.rows(0, mi).into_owned(),
        formulation,
        xi: None,
        slacks: None,
        active_condition: sol.active_condition,
        reliable: true,
        last_residual: Some(sol.last_residual),
    }
}

/// The original least-squares subproblem `min ½‖R d − q‖²`.
pub fn solve_lsq_original(
    r: &DMatrix<f64>,
    q: &DVector<f64>,
    lin: &Linearization,
    opts: &LdpOptions,
) -> Result<SubproblemOutcome, EngineFailure> {
    let sol = solve_lsq(
        r,
        q,
        &lin.eq_jacobian,
        &lin.eq_values,
        &lin.ineq_jacobian,
        &lin.ineq_values,
        opts,
    )?;
    Ok(lsq_outcome(&sol, lin.n(), lin.eq_values.len(), lin.ineq_values.len(), Formulation::Lsq))
}

/// Powell-style relaxation in least-squares form; the objective gains the
/// row `√M·ξ` and `0 ≤ ξ ≤ 1` enters as two inequality rows.
pub fn solve_rlsq1(
    r: &DMatrix<f64>,
    q: &DVector<f64>,
    lin: &Linearization,
    m: f64,
    opts: &LdpOptions,
) -> Result<RelaxedOutcome, EngineFailure> {
    let n = lin.n();
    let (me, mi) = (lin.eq_values.len(), lin.ineq_values.len());
    let (eq, ineq) = rqp1_rows(&lin.eq_jacobian, &lin.eq_values, &lin.ineq_jacobian, &lin.ineq_values);
    let mut g = DMatrix::zeros(mi + 2, n + 1);
    g.view_mut((0, 0), (mi, n + 1)).copy_from(&ineq);
    g[(mi, n)] = 1.0;
    g[(mi + 1, n)] = -1.0;
    let mut gv = DVector::zeros(mi + 2);
    gv.rows_mut(0, mi).copy_from(&lin.ineq_values);
    gv[mi + 1] = 1.0;
    let mut qa = DVector::zeros(q.len() + 1);
    qa.rows_mut(0, q.len()).copy_from(q);
    let sol = solve_lsq(&block_diag(r, &[m.sqrt()]), &qa, &eq, &lin.eq_values, &g, &gv, opts)?;
    let mut out = lsq_outcome(&sol, n, me, mi, Formulation::Rlsq1);
    out.xi = Some(sol.direction[n].clamp(0.0, 1.0));
    Ok(out)
}

/// Elastic relaxation in least-squares form: blocks `√M'·I` with targets
/// `−w/√M'` reproduce the quadratic-plus-linear penalty up to a constant.
pub fn solve_rlsq2(
    r: &DMatrix<f64>,
    q: &DVector<f64>,
    lin: &Linearization,
    m_prime: f64,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
    opts: &LdpOptions,
) -> Result<RelaxedOutcome, EngineFailure> {
    let n = lin.n();
    let (me, mi) = (lin.eq_values.len(), lin.ineq_values.len());
    if w1.len() != me || w2.len() != mi || !(m_prime > 0.0) {
        return Err(EngineFailure::Failed("rlsq2 weight mismatch".into()));
    }
    let ns = 2 * me + mi;
    let (eq, ineq) = rqp2_rows(&lin.eq_jacobian, &lin.ineq_jacobian);
    let mut g = DMatrix::zeros(mi + ns, n + ns);
    g.view_mut((0, 0), (mi, n + ns)).copy_from(&ineq);
    for k in 0..ns {
        g[(mi + k, n + k)] = 1.0;
    }
    let mut gv = DVector::zeros(mi + ns);
    gv.rows_mut(0, mi).copy_from(&lin.ineq_values);
    let sm = m_prime.sqrt();
    let mut qa = DVector::zeros(q.len() + ns);
    qa.rows_mut(0, q.len()).copy_from(q);
    qa.rows_mut(q.len(), me).copy_from(&(-w1 / sm));
    qa.rows_mut(q.len() + me, me).copy_from(&(-w1 / sm));
    qa.rows_mut(q.len() + 2 * me, mi).copy_from(&(-w2 / sm));
    let sol = solve_lsq(&block_diag(r, &vec![sm; ns]), &qa, &eq, &lin.eq_values, &g, &gv, opts)?;
    let mut out = lsq_outcome(&sol, n, me, mi, Formulation::Rlsq2);
    out.slacks = Some(split_slacks(&sol.direction, n, me, mi).clamp_nonneg());
    Ok(out)
}

/// RQP2 objective at a point `(d, s, t, v)`.
pub fn rqp2_objective(
    data: &QpData,
    m_prime: f64,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
    d: &DVector<f64>,
    sl: &Slacks,
) -> f64 {
    data.objective(d)
        + 0.5 * m_prime * (sl.s.norm_squared() + sl.t.norm_squared() + sl.v.norm_squared())
        + w1.dot(&(&sl.s + &sl.t))
        + w2.dot(&sl.v)
}

/// RLSQ2 objective `½‖[R; √M'I](d, s, t, v) − (q, −w/√M')‖²`.
pub fn rlsq2_objective(
    r: &DMatrix<f64>,
    q: &DVector<f64>,
    m_prime: f64,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
    d: &DVector<f64>,
    sl: &Slacks,
) -> f64 {
    let sm = m_prime.sqrt();
    let blk = |x: &DVector<f64>, w: &DVector<f64>| (x * sm + w / sm).norm_squared();
    0.5 * ((r * d - q).norm_squared() + blk(&sl.s, w1) + blk(&sl.t, w1) + blk(&sl.v, w2))
}

/// Solves the original subproblem and both relaxations for one family.
///
/// Implementations see the same data on every call within an iteration.
pub trait SubproblemEngine {
    /// Formulation tag for level 0, 1 or 2 of this family.
    fn formulation(&self, level: usize) -> Formulation;
    fn original(&mut self) -> Result<SubproblemOutcome, EngineFailure>;
    fn relax1(&mut self) -> Result<RelaxedOutcome, EngineFailure>;
    fn relax2(&mut self) -> Result<RelaxedOutcome, EngineFailure>;
}

/// Dense quadratic model `½dᵀBd + ∇fᵀd`.
pub struct QpEngine<'a> {
    pub hessian: &'a DMatrix<f64>,
    pub lin: &'a Linearization,
    pub params: &'a RelaxParams,
}

impl SubproblemEngine for QpEngine<'_> {
    fn formulation(&self, level: usize) -> Formulation {
        [Formulation::Qp, Formulation::Rqp1, Formulation::Rqp2][level]
    }

    fn original(&mut self) -> Result<SubproblemOutcome, EngineFailure> {
        let sol = solve_qp(&self.lin.qp_data(self.hessian))?;
        Ok(qp_outcome(&sol, self.lin.n(), Formulation::Qp))
    }

    fn relax1(&mut self) -> Result<RelaxedOutcome, EngineFailure> {
        solve_rqp1(&self.lin.qp_data(self.hessian), self.params.powell_m)
    }

    fn relax2(&mut self) -> Result<RelaxedOutcome, EngineFailure> {
        let (w1, w2) = self.params.weights(self.lin.eq_values.len(), self.lin.ineq_values.len());
        solve_rqp2(&self.lin.qp_data(self.hessian), self.params.nowak_m, &w1, &w2)
    }
}

/// Factored model `½‖R d − q‖²` with `RᵀR = B` and `Rᵀq = −∇f`.
pub struct LsqEngine<'a> {
    pub r: &'a DMatrix<f64>,
    pub q: &'a DVector<f64>,
    pub lin: &'a Linearization,
    pub params: &'a RelaxParams,
    pub ldp: &'a LdpOptions,
}

impl SubproblemEngine for LsqEngine<'_> {
    fn formulation(&self, level: usize) -> Formulation {
        [Formulation::Lsq, Formulation::Rlsq1, Formulation::Rlsq2][level]
    }

    fn original(&mut self) -> Result<SubproblemOutcome, EngineFailure> {
        solve_lsq_original(self.r, self.q, self.lin, self.ldp)
    }

    fn relax1(&mut self) -> Result<RelaxedOutcome, EngineFailure> {
        solve_rlsq1(self.r, self.q, self.lin, self.params.powell_m, self.ldp)
    }

    fn relax2(&mut self) -> Result<RelaxedOutcome, EngineFailure> {
        let (w1, w2) = self.params.weights(self.lin.eq_values.len(), self.lin.ineq_values.len());
        solve_rlsq2(self.r, self.q, self.lin, self.params.nowak_m, &w1, &w2, self.ldp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelaxMode {
    Powell = 1,
    Nowak = 2,
}

/// Hybrid-strategy counters. `mode` is the relaxation indicator `n_rex`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationState {
    pub mode: RelaxMode,
    /// `n_ξ`: consecutive mode-1 solves with `ξ ≥ ξ̄`.
    pub consecutive_high_xi: usize,
    /// `n_ill`: consecutive mode-2 solves with `κ_A ≥ κ̄`.
    pub consecutive_ill: usize,
    pub xi_threshold: f64,
    pub count_threshold: usize,
    pub cond_threshold: f64,
    /// With mode 2 disabled, a zero mode-1 direction is a failure and a
    /// persistently large `ξ` never escalates.
    pub nowak_enabled: bool,
}

impl Default for RelaxationState {
    fn default() -> Self {
        RelaxationState {
            mode: RelaxMode::Powell,
            consecutive_high_xi: 0,
            consecutive_ill: 0,
            xi_threshold: 0.99,
            count_threshold: 10,
            cond_threshold: 1e30,
            nowak_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchReason {
    /// Mode 1 returned `d = 0`.
    ZeroDirection,
    /// `ξ ≥ ξ̄` persisted past `n̄` calls.
    PersistentHighXi,
    /// `κ_A ≥ κ̄` persisted past `n̄` calls.
    IllConditioned,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HybridEvent {
    Attempt(Formulation),
    OriginalFailed(EngineFailure),
    Escalated(SwitchReason),
    DeEscalated(SwitchReason),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HybridError {
    #[error("{formulation:?} unreliable (last residual {last_residual:e})")]
    Unreliable {
        formulation: Formulation,
        last_residual: f64,
        error_bound: f64,
    },
    #[error("{formulation:?} did not converge: {reason}")]
    NotConverged {
        formulation: Formulation,
        reason: EngineFailure,
    },
    #[error("no viable direction: both relaxations returned d = 0")]
    NoViableDirection,
}

#[derive(Debug, Clone)]
pub struct HybridResult {
    pub outcome: Result<SubproblemOutcome, HybridError>,
    pub state: RelaxationState,
    pub events: Vec<HybridEvent>,
}

impl HybridResult {
    /// Solves attempted per formulation level.
    pub fn attempts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for e in &self.events {
            if let HybridEvent::Attempt(f) = e {
                c[f.level()] += 1;
            }
        }
        c
    }
}

fn is_zero(d: &DVector<f64>) -> bool {
    d.amax() <= ZERO_DIRECTION
}

/// One pass of the hybrid strategy. Pure in `state`; the engine is only
/// asked to solve.
///
/// An unreliable verdict from the original problem is returned at once
/// without trying a relaxation.
pub fn hybrid_solve(engine: &mut dyn SubproblemEngine, state: &RelaxationState) -> HybridResult {
    let mut st = state.clone();
    let mut events = Vec::new();
    let outcome = run_hybrid(engine, &mut st, &mut events);
    HybridResult {
        outcome,
        state: st,
        events,
    }
}

fn run_hybrid(
    engine: &mut dyn SubproblemEngine,
    st: &mut RelaxationState,
    events: &mut Vec<HybridEvent>,
) -> Result<SubproblemOutcome, HybridError> {
    let orig = engine.original();
    match orig {
        Ok(out) => {
            events.push(HybridEvent::Attempt(out.formulation));
            return Ok(out);
        }
        Err(e) => {
            let formulation = engine.formulation(0);
            events.push(HybridEvent::Attempt(formulation));
            events.push(HybridEvent::OriginalFailed(e.clone()));
            if let EngineFailure::Unreliable {
                last_residual,
                error_bound,
            } = e
            {
                return Err(HybridError::Unreliable {
                    formulation,
                    last_residual,
                    error_bound,
                });
            }
        }
    }
    // Each switch leads to a solve that cannot switch back without first
    // resetting the opposite counter, so three rounds always suffice.
    for _ in 0..4 {
        match st.mode {
            RelaxMode::Powell => {
                let res = engine.relax1();
                st.consecutive_ill = 0;
                let out = match res {
                    Ok(out) => out,
                    Err(reason) => return Err(not_converged(events, engine.formulation(1), reason)),
                };
                events.push(HybridEvent::Attempt(out.formulation));
                if is_zero(&out.direction) {
                    if !st.nowak_enabled {
                        return Err(HybridError::NoViableDirection);
                    }
                    st.mode = RelaxMode::Nowak;
                    events.push(HybridEvent::Escalated(SwitchReason::ZeroDirection));
                    continue;
                }
                let xi = out.xi.unwrap_or(0.0);
                if xi < st.xi_threshold {
                    st.consecutive_high_xi = 0;
                    return Ok(out);
                }
                if st.consecutive_high_xi >= st.count_threshold && st.nowak_enabled {
                    st.mode = RelaxMode::Nowak;
                    events.push(HybridEvent::Escalated(SwitchReason::PersistentHighXi));
                    continue;
                }
                if st.consecutive_high_xi < st.count_threshold {
                    st.consecutive_high_xi += 1;
                }
                return Ok(out);
            }
            RelaxMode::Nowak => {
                let res = engine.relax2();
                st.consecutive_high_xi = 0;
                let out = match res {
                    Ok(out) => out,
                    Err(reason) => return Err(not_converged(events, engine.formulation(2), reason)),
                };
                events.push(HybridEvent::Attempt(out.formulation));
                if is_zero(&out.direction) {
                    return Err(HybridError::NoViableDirection);
                }
                if out.active_condition < st.cond_threshold {
                    st.consecutive_ill = 0;
                    return Ok(out);
                }
                if st.consecutive_ill >= st.count_threshold {
                    st.mode = RelaxMode::Powell;
                    events.push(HybridEvent::DeEscalated(SwitchReason::IllConditioned));
                    continue;
                }
                st.consecutive_ill += 1;
                return Ok(out);
            }
        }
    }
    Err(HybridError::NoViableDirection)
}

fn not_converged(events: &mut Vec<HybridEvent>, formulation: Formulation, reason: EngineFailure) -> HybridError {
    events.push(HybridEvent::Attempt(formulation));
    if let EngineFailure::Unreliable {
        last_residual,
        error_bound,
    } = reason
    {
        return HybridError::Unreliable {
            formulation,
            last_residual,
            error_bound,
        };
    }
    HybridError::NotConverged { formulation, reason }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn m(r: usize, c: usize, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, x)
    }

    #[test]
    fn c_matrix_examples() {
        assert_eq!(build_c_matrix(&v(&[0.5, -0.3])), DMatrix::from_diagonal(&v(&[0.0, 1.0])));
        assert_eq!(build_c_matrix(&v(&[0.0, 0.0])), DMatrix::identity(2, 2));
        assert_eq!(build_c_matrix(&v(&[-1.0, -1.0, 2.0])), DMatrix::from_diagonal(&v(&[1.0, 1.0, 0.0])));
    }

    fn single_eq() -> QpData {
        QpData::unconstrained(m(1, 1, &[1.0]), v(&[0.0])).with_equalities(m(1, 1, &[1.0]), v(&[1.0]))
    }

    fn contradictory() -> QpData {
        // d − 1 ≥ 0 and −d − 1 ≥ 0
        QpData::unconstrained(m(1, 1, &[1.0]), v(&[0.0])).with_inequalities(m(2, 1, &[1.0, -1.0]), v(&[-1.0, -1.0]))
    }

    #[test]
    fn rqp1_single_equality() {
        let out = solve_rqp1(&single_eq(), 1e4).unwrap();
        let xi = out.xi.unwrap();
        assert!((xi - 1.0 / 10001.0).abs() < 1e-12, "{xi}");
        assert!((out.direction[0] + (1.0 - 1.0 / 10001.0)).abs() < 1e-12);
        assert_eq!(out.formulation, Formulation::Rqp1);
    }

    #[test]
    fn rqp1_contradictory_gives_zero_direction() {
        let out = solve_rqp1(&contradictory(), 1e4).unwrap();
        assert!(out.direction[0].abs() < 1e-12);
        assert!((out.xi.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rqp2_contradictory_pair() {
        let w1 = v(&[]);
        let w2 = v(&[1.0, 1.0]);
        let out = solve_rqp2(&contradictory(), 1e4, &w1, &w2).unwrap();
        assert!(out.direction[0].abs() < 1e-12);
        let sl = out.slacks.unwrap();
        assert!((sl.v - v(&[1.0, 1.0])).amax() < 1e-12);
    }

    #[test]
    fn rqp2_single_violated_equality() {
        let out = solve_rqp2(&single_eq(), 1e4, &v(&[1.0]), &v(&[])).unwrap();
        // substituting d = s − t − 1, the gradient in s vanishes at s = t = 0
        // and the gradient in t is 2 > 0 there, so both slacks stay at zero
        let sl = out.slacks.unwrap();
        assert!(sl.s[0].abs() < 1e-12 && sl.t[0].abs() < 1e-12);
        assert!((out.direction[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rlsq_forms_match_qp_forms() {
        let lin = Linearization {
            grad_f: v(&[0.0]),
            eq_jacobian: m(1, 1, &[1.0]),
            eq_values: v(&[1.0]),
            ineq_jacobian: DMatrix::zeros(0, 1),
            ineq_values: v(&[]),
        };
        let r = m(1, 1, &[1.0]);
        let q = v(&[0.0]);
        let opts = LdpOptions::default();
        let out = solve_rlsq1(&r, &q, &lin, 1e4, &opts).unwrap();
        assert!((out.xi.unwrap() - 1.0 / 10001.0).abs() < 1e-10);
        assert!((out.direction[0] + 1.0 - 1.0 / 10001.0).abs() < 1e-10);
        assert_eq!(out.formulation, Formulation::Rlsq1);

        let out2 = solve_rlsq2(&r, &q, &lin, 1e4, &v(&[1.0]), &v(&[]), &opts).unwrap();
        let qp2 = solve_rqp2(&single_eq(), 1e4, &v(&[1.0]), &v(&[])).unwrap();
        assert!((out2.direction[0] - qp2.direction[0]).abs() < 1e-6);

        let lin = Linearization {
            grad_f: v(&[0.0]),
            eq_jacobian: DMatrix::zeros(0, 1),
            eq_values: v(&[]),
            ineq_jacobian: m(2, 1, &[1.0, -1.0]),
            ineq_values: v(&[-1.0, -1.0]),
        };
        let out = solve_rlsq1(&r, &q, &lin, 1e4, &opts).unwrap();
        assert!(out.direction[0].abs() < 1e-10);
        assert!((out.xi.unwrap() - 1.0).abs() < 1e-10);
        let out = solve_rlsq2(&r, &q, &lin, 1e4, &v(&[]), &v(&[1.0, 1.0]), &opts).unwrap();
        assert!(out.direction[0].abs() < 1e-10);
        assert!((out.slacks.unwrap().v - v(&[1.0, 1.0])).amax() < 1e-8);
    }

    /// Engine that replays a fixed script of mode-1 and mode-2 results.
    struct Scripted {
        original_ok: bool,
        relax1: Vec<(f64, f64)>,
        relax2: Vec<(f64, f64)>,
    }

    fn scripted_outcome(f: Formulation, d: f64, aux: f64) -> SubproblemOutcome {
        SubproblemOutcome {
            direction: v(&[d]),
            eq_multipliers: v(&[]),
            ineq_multipliers: v(&[]),
            formulation: f,
            xi: (f == Formulation::Rqp1).then_some(aux),
            slacks: None,
            active_condition: if f == Formulation::Rqp2 { aux } else { 1.0 },
            reliable: true,
            last_residual: None,
        }
    }

    impl SubproblemEngine for Scripted {
        fn formulation(&self, level: usize) -> Formulation {
            [Formulation::Qp, Formulation::Rqp1, Formulation::Rqp2][level]
        }
        fn original(&mut self) -> Result<SubproblemOutcome, EngineFailure> {
            if self.original_ok {
                Ok(scripted_outcome(Formulation::Qp, 1.0, 0.0))
            } else {
                Err(EngineFailure::Infeasible)
            }
        }
        fn relax1(&mut self) -> Result<RelaxedOutcome, EngineFailure> {
            let (d, xi) = self.relax1.remove(0);
            Ok(scripted_outcome(Formulation::Rqp1, d, xi))
        }
        fn relax2(&mut self) -> Result<RelaxedOutcome, EngineFailure> {
            let (d, k) = self.relax2.remove(0);
            Ok(scripted_outcome(Formulation::Rqp2, d, k))
        }
    }

    #[test]
    fn feasible_original_leaves_state_alone() {
        let mut e = Scripted { original_ok: true, relax1: vec![], relax2: vec![] };
        let st = RelaxationState::default();
        let res = hybrid_solve(&mut e, &st);
        assert_eq!(res.attempts(), [1, 0, 0]);
        assert_eq!(res.state, st);
        assert_eq!(res.outcome.unwrap().formulation, Formulation::Qp);
    }

    #[test]
    fn zero_direction_escalates() {
        let mut e = Scripted { original_ok: false, relax1: vec![(0.0, 1.0)], relax2: vec![(0.5, 1.0)] };
        let res = hybrid_solve(&mut e, &RelaxationState::default());
        assert_eq!(res.attempts(), [1, 1, 1]);
        assert_eq!(res.state.mode, RelaxMode::Nowak);
        assert_eq!(res.outcome.as_ref().unwrap().formulation, Formulation::Rqp2);
        assert!(res.events.contains(&HybridEvent::Escalated(SwitchReason::ZeroDirection)));
    }

    #[test]
    fn mode2_zero_direction_is_an_error() {
        let mut e = Scripted { original_ok: false, relax1: vec![(0.0, 1.0)], relax2: vec![(0.0, 1.0)] };
        let res = hybrid_solve(&mut e, &RelaxationState::default());
        assert_eq!(res.outcome.unwrap_err(), HybridError::NoViableDirection);
    }

    #[test]
    fn high_xi_escalates_after_count_threshold() {
        // n_ξ climbs 0 → 10 on calls 1–10; call 11 sees n_ξ ≥ n̄ and escalates.
        let script: Vec<(f64, f64)> = vec![(0.5, 0.995); 11];
        let mut e = Scripted { original_ok: false, relax1: script, relax2: vec![(0.5, 1.0)] };
        let mut st = RelaxationState::default();
        for call in 1..=10 {
            let res = hybrid_solve(&mut e, &st);
            assert_eq!(res.outcome.unwrap().formulation, Formulation::Rqp1);
            assert_eq!(res.state.consecutive_high_xi, call);
            st = res.state;
        }
        let res = hybrid_solve(&mut e, &st);
        assert_eq!(res.outcome.unwrap().formulation, Formulation::Rqp2);
        assert_eq!(res.state.mode, RelaxMode::Nowak);
        assert_eq!(res.state.consecutive_high_xi, 0);
    }

    #[test]
    fn disabled_mode2_never_escalates() {
        let st0 = RelaxationState { nowak_enabled: false, ..Default::default() };
        let mut e = Scripted { original_ok: false, relax1: vec![(0.5, 0.995); 12], relax2: vec![] };
        let mut st = st0.clone();
        for _ in 0..12 {
            let res = hybrid_solve(&mut e, &st);
            assert_eq!(res.outcome.unwrap().formulation, Formulation::Rqp1);
            st = res.state;
        }
        assert_eq!(st.mode, RelaxMode::Powell);
        assert_eq!(st.consecutive_high_xi, 10);
        let mut e = Scripted { original_ok: false, relax1: vec![(0.0, 1.0)], relax2: vec![] };
        assert_eq!(hybrid_solve(&mut e, &st0).outcome.unwrap_err(), HybridError::NoViableDirection);
    }

    #[test]
    fn low_xi_resets_counter() {
        let mut e = Scripted { original_ok: false, relax1: vec![(0.5, 0.995), (0.5, 0.2)], relax2: vec![] };
        let st = hybrid_solve(&mut e, &RelaxationState::default()).state;
        assert_eq!(st.consecutive_high_xi, 1);
        let st = hybrid_solve(&mut e, &st).state;
        assert_eq!(st.consecutive_high_xi, 0);
        assert_eq!(st.mode, RelaxMode::Powell);
    }

    #[test]
    fn ill_conditioning_deescalates() {
        let st0 = RelaxationState { mode: RelaxMode::Nowak, ..Default::default() };
        let mut script2 = vec![(0.5, 1e31); 11];
        script2.push((0.5, 1.0));
        let mut e = Scripted { original_ok: false, relax1: vec![(0.5, 0.3)], relax2: script2 };
        let mut st = st0;
        for call in 1..=10 {
            let res = hybrid_solve(&mut e, &st);
            assert_eq!(res.outcome.unwrap().formulation, Formulation::Rqp2);
            assert_eq!(res.state.consecutive_ill, call);
            st = res.state;
        }
        let res = hybrid_solve(&mut e, &st);
        assert_eq!(res.outcome.unwrap().formulation, Formulation::Rqp1);
        assert_eq!(res.state.mode, RelaxMode::Powell);
        assert_eq!(res.state.consecutive_ill, 0);
        assert!(res.events.contains(&HybridEvent::DeEscalated(SwitchReason::IllConditioned)));
    }
}
