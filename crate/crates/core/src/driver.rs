//! Outer loops: improved SQP on dense quadratic subproblems and improved
//! SLSQP on factored least-squares subproblems with a QP fallback.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lsq::LdpOptions;
use crate::numkit::{ldlt_rank_one_update, form_r_q, LdltFactors, LinalgError};
use crate::problems::NlpProblem;
use crate::relax::{
    hybrid_solve, Formulation, HybridError, HybridEvent, HybridResult, Linearization, LsqEngine, QpEngine,
    RelaxParams, RelaxationState, SubproblemOutcome, SwitchReason,
};
use crate::step::{
    armijo_search, check_group1, check_group2, group2_tolerance, damped_bfgs_dense, damped_secant, lagrangian_gradient_diff,
    merit_directional_derivative, merit_value, update_penalties, AcceptedBy, EvalPoint, Evaluator,
    LineSearchConfig, LineSearchError, PenaltyState,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    /// `ξ̄`
    pub xi_threshold: f64,
    /// `n̄`
    pub count_threshold: usize,
    /// `κ̄`
    pub cond_threshold: f64,
    /// `ī_reset`
    pub reset_limit: usize,
    /// `τ`
    pub tol_loosen: f64,
    /// `k̄`
    pub warmup_iters: usize,
    /// `τ_d`
    pub norm_guard: f64,
    pub powell_m: f64,
    pub nowak_m: f64,
    pub nowak_w1: Option<DVector<f64>>,
    pub nowak_w2: Option<DVector<f64>>,
    pub armijo_eta: f64,
    pub max_linesearch: usize,
    pub max_iterations: usize,
    pub guard_floor: f64,
    pub assumed_eps: f64,
    /// Recorded only; noise is applied by wrapping the problem.
    pub noise_seed: Option<u64>,
    pub enable_resets: bool,
    pub enable_relaxation2: bool,
    pub cap_acceptance: bool,
    pub enable_qp_fallback: bool,
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-5,
            xi_threshold: 0.99,
            count_threshold: 10,
            cond_threshold: 1e30,
            reset_limit: 5,
            tol_loosen: 10.0,
            warmup_iters: 5,
            norm_guard: 10.0,
            powell_m: 1e4,
            nowak_m: 1e4,
            nowak_w1: None,
            nowak_w2: None,
            armijo_eta: 0.1,
            max_linesearch: 10,
            max_iterations: 500,
            guard_floor: 2e-10,
            assumed_eps: 1e-12,
            noise_seed: None,
            enable_resets: true,
            enable_relaxation2: true,
            cap_acceptance: true,
            enable_qp_fallback: true,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    /// Checks the documented parameter ranges.
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("tol", self.tol),
            ("cond_threshold", self.cond_threshold),
            ("norm_guard", self.norm_guard),
            ("powell_m", self.powell_m),
            ("nowak_m", self.nowak_m),
            ("armijo_eta", self.armijo_eta),
            ("guard_floor", self.guard_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.xi_threshold > 0.0 && self.xi_threshold < 1.0) {
            return Err(format!("xi_threshold must lie in (0, 1), got {}", self.xi_threshold));
        }
        if !(self.tol_loosen > 1.0) {
            return Err(format!("tol_loosen must exceed 1, got {}", self.tol_loosen));
        }
        if self.max_linesearch == 0 || self.count_threshold == 0 {
            return Err("max_linesearch and count_threshold must be at least 1".into());
        }
        Ok(())
    }

    /// Degraded variant used as a comparison baseline: no resets, no
    /// second relaxation and no cap acceptance.
    pub fn degraded(mut self) -> Self {
        self.enable_resets = false;
        self.enable_relaxation2 = false;
        self.cap_acceptance = false;
        self
    }

    fn relax_params(&self) -> RelaxParams {
        RelaxParams {
            powell_m: self.powell_m,
            nowak_m: self.nowak_m,
            w1: self.nowak_w1.clone(),
            w2: self.nowak_w2.clone(),
        }
    }

    fn relax_state(&self) -> RelaxationState {
        RelaxationState {
            xi_threshold: self.xi_threshold,
            count_threshold: self.count_threshold,
            cond_threshold: self.cond_threshold,
            ..RelaxationState::default()
        }
    }

    fn line_search(&self) -> LineSearchConfig {
        LineSearchConfig {
            eta: self.armijo_eta,
            max_trials: self.max_linesearch,
            cap_acceptance: self.cap_acceptance,
        }
    }

    fn ldp(&self) -> LdpOptions {
        LdpOptions {
            guard_floor: self.guard_floor,
            assumed_eps: self.assumed_eps,
            perturb_last: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    ConvergedGroup1,
    ConvergedGroup2,
    InfeasibleSubproblem,
    AscentAfterReset,
    MaxIterations,
    LineSearchEvaluationFailure,
    /// No trial passed the sufficient-decrease test with cap acceptance off.
    LineSearchFailure,
    /// Evaluation failed outside a line search (start point or gradients).
    EvaluationFailure,
}

impl SolveStatus {
    pub fn converged(self) -> bool {
        matches!(self, SolveStatus::ConvergedGroup1 | SolveStatus::ConvergedGroup2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::ConvergedGroup1 => "converged-group1",
            SolveStatus::ConvergedGroup2 => "converged-group2",
            SolveStatus::InfeasibleSubproblem => "infeasible-subproblem",
            SolveStatus::AscentAfterReset => "ascent-after-reset",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::LineSearchEvaluationFailure => "line-search-evaluation-failure",
            SolveStatus::LineSearchFailure => "line-search-failure",
            SolveStatus::EvaluationFailure => "evaluation-failure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SolveStatus::ConvergedGroup1,
            SolveStatus::ConvergedGroup2,
            SolveStatus::InfeasibleSubproblem,
            SolveStatus::AscentAfterReset,
            SolveStatus::MaxIterations,
            SolveStatus::LineSearchEvaluationFailure,
            SolveStatus::LineSearchFailure,
            SolveStatus::EvaluationFailure,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureCause {
    /// Neither the subproblem nor its relaxations produced a direction.
    Subproblem,
    /// The dual least-squares verdict failed the accuracy guard.
    Unreliable,
    /// `‖d‖ > τ_d·d_max` after warm-up.
    NormGuard,
    /// `Dφ ≥ 0`.
    Ascent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum SolverEvent {
    Reset { iteration: usize, cause: FailureCause },
    Relaxed { iteration: usize, formulation: Formulation },
    Escalated { iteration: usize, reason: SwitchReason },
    DeEscalated { iteration: usize, reason: SwitchReason },
    Fallback { iteration: usize, cause: FailureCause },
    SolverRestored { iteration: usize },
    CapAccepted { iteration: usize, alpha: f64 },
    ToleranceLoosened { iteration: usize, tol: f64 },
    FactorReset { iteration: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub status: SolveStatus,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub acc_inf: f64,
    /// From the test that ended the run, else the last first-group test.
    pub acc_opt: f64,
    /// `tõl` at termination.
    pub tol_effective: f64,
    pub n_f: usize,
    pub n_grad: usize,
    pub iterations: usize,
    /// Attempts at the original subproblem, relaxation 1, relaxation 2.
    pub subproblem_counts: [usize; 3],
    pub reset_count: usize,
    /// Iteration indices at which the QP fallback was switched on.
    pub fallback_events: Vec<usize>,
    pub event_log: Vec<SolverEvent>,
    /// Accepted iterates, starting with `x0`, when recording is on.
    pub iterates: Vec<Vec<f64>>,
}

/// Outcome of [`ldl_bfgs_update`].
#[derive(Debug, Clone)]
pub struct LdlUpdate {
    pub factors: LdltFactors,
    /// The downdate was indefinite and the factors fell back to identity.
    pub reset: bool,
}

/// `LDLᵀ + r rᵀ/(rᵀs) − (Bs)(Bs)ᵀ/(sᵀBs)` as two rank-one modifications.
pub fn ldl_bfgs_update(f: &LdltFactors, s: &DVector<f64>, r: &DVector<f64>) -> Result<LdlUpdate, LinalgError> {
    let rs = r.dot(s);
    if !(rs > 0.0) {
        return Err(LinalgError::Contract(format!("rᵀs = {rs:e} is not positive")));
    }
    let bs = f.mul_vec(s);
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return Err(LinalgError::Contract(format!("sᵀBs = {sbs:e} is not positive")));
    }
    let up = ldlt_rank_one_update(f, 1.0 / rs, r)?;
    match ldlt_rank_one_update(&up, -1.0 / sbs, &bs) {
        Ok(factors) => Ok(LdlUpdate { factors, reset: false }),
        Err(LinalgError::IndefiniteDowndate { .. }) => Ok(LdlUpdate {
            factors: LdltFactors::identity(f.dim()),
            reset: true,
        }),
        Err(e) => Err(e),
    }
}

fn linearize(p: &EvalPoint) -> Linearization {
    let gr = p.grads.as_ref().expect("gradients evaluated before linearizing");
    Linearization {
        grad_f: gr.grad_f.clone(),
        eq_jacobian: gr.jac_h.clone(),
        eq_values: p.h.clone(),
        ineq_jacobian: gr.jac_g.clone(),
        ineq_values: p.g.clone(),
    }
}

/// Quasi-Newton model owned by a driver.
enum Model {
    Dense { b: DMatrix<f64>, identity: bool },
    Factored { f: LdltFactors },
}

impl Model {
    fn is_identity(&self) -> bool {
        match self {
            Model::Dense { identity, .. } => *identity,
            Model::Factored { f } => f.is_identity(),
        }
    }

    fn reset(&mut self, n: usize) {
        *self = match self {
            Model::Dense { .. } => Model::Dense {
                b: DMatrix::identity(n, n),
                identity: true,
            },
            Model::Factored { .. } => Model::Factored {
                f: LdltFactors::identity(n),
            },
        };
    }

    fn dense(&self) -> DMatrix<f64> {
        match self {
            Model::Dense { b, .. } => b.clone(),
            Model::Factored { f } => f.reconstruct(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SubSolver {
    Lsq,
    Qp,
}

struct Run<'a> {
    cfg: &'a SolverConfig,
    ev: Evaluator<'a>,
    name: &'static str,
    relax: RelaxationState,
    params: RelaxParams,
    ldp: LdpOptions,
    counts: [usize; 3],
    events: Vec<SolverEvent>,
    fallbacks: Vec<usize>,
    iterates: Vec<Vec<f64>>,
    n_reset: usize,
    tol_tilde: f64,
    loosened: bool,
}

impl<'a> Run<'a> {
    fn new(problem: &'a NlpProblem, cfg: &'a SolverConfig, name: &'static str) -> Self {
        let mut relax = cfg.relax_state();
        relax.nowak_enabled = cfg.enable_relaxation2;
        Run {
            cfg,
            ev: Evaluator::new(problem),
            name,
            relax,
            params: cfg.relax_params(),
            ldp: cfg.ldp(),
            counts: [0; 3],
            events: Vec::new(),
            fallbacks: Vec::new(),
            iterates: Vec::new(),
            n_reset: 0,
            tol_tilde: cfg.tol,
            loosened: false,
        }
    }

    fn absorb(&mut self, k: usize, res: HybridResult) -> Result<SubproblemOutcome, HybridError> {
        let c = res.attempts();
        for i in 0..3 {
            self.counts[i] += c[i];
        }
        for e in &res.events {
            match e {
                HybridEvent::Escalated(reason) => self.events.push(SolverEvent::Escalated {
                    iteration: k,
                    reason: *reason,
                }),
                HybridEvent::DeEscalated(reason) => self.events.push(SolverEvent::DeEscalated {
                    iteration: k,
                    reason: *reason,
                }),
                _ => {}
            }
        }
        self.relax = res.state;
        if let Ok(out) = &res.outcome {
            if out.formulation.level() > 0 {
                self.events.push(SolverEvent::Relaxed {
                    iteration: k,
                    formulation: out.formulation,
                });
            }
        }
        res.outcome
    }

    fn maybe_loosen(&mut self, k: usize) {
        if !self.loosened && self.n_reset >= self.cfg.reset_limit {
            self.loosened = true;
            self.tol_tilde = group2_tolerance(self.cfg.tol, self.cfg.tol_loosen, self.n_reset, self.cfg.reset_limit);
            self.events.push(SolverEvent::ToleranceLoosened {
                iteration: k,
                tol: self.tol_tilde,
            });
        }
    }

    fn record(&mut self, x: &DVector<f64>) {
        if self.cfg.record_iterates {
            self.iterates.push(x.iter().copied().collect());
        }
    }

    fn finish(
        self,
        status: SolveStatus,
        p: &EvalPoint,
        mult: Option<(&DVector<f64>, &DVector<f64>)>,
        acc_opt: f64,
        iterations: usize,
    ) -> SolveReport {
        let (lam, mu) = match mult {
            Some((l, m)) => (l.iter().copied().collect(), m.iter().copied().collect()),
            None => (vec![0.0; p.h.len()], vec![0.0; p.g.len()]),
        };
        SolveReport {
            solver: self.name.to_string(),
            status,
            x_star: p.x.iter().copied().collect(),
            f_star: p.f,
            eq_multipliers: lam,
            ineq_multipliers: mu,
            acc_inf: p.infeasibility(),
            acc_opt,
            tol_effective: self.tol_tilde,
            n_f: self.ev.n_f,
            n_grad: self.ev.n_grad,
            iterations,
            subproblem_counts: self.counts,
            reset_count: self.n_reset,
            fallback_events: self.fallbacks,
            event_log: self.events,
            iterates: self.iterates,
        }
    }
}

fn failed_start(problem: &NlpProblem, x0: &DVector<f64>, cfg: &SolverConfig, name: &'static str, ev: Evaluator<'_>) -> SolveReport {
    SolveReport {
        solver: name.to_string(),
        status: SolveStatus::EvaluationFailure,
        x_star: x0.iter().copied().collect(),
        f_star: f64::NAN,
        eq_multipliers: vec![0.0; problem.m_eq],
        ineq_multipliers: vec![0.0; problem.m_ineq],
        acc_inf: f64::INFINITY,
        acc_opt: f64::INFINITY,
        tol_effective: cfg.tol,
        n_f: ev.n_f,
        n_grad: ev.n_grad,
        iterations: 0,
        subproblem_counts: [0; 3],
        reset_count: 0,
        fallback_events: vec![],
        event_log: vec![],
        iterates: vec![],
    }
}

fn start_point(ev: &mut Evaluator<'_>, x0: &DVector<f64>) -> Option<EvalPoint> {
    let mut p = ev.point(x0).ok()?;
    ev.add_gradients(&mut p).ok()?;
    Some(p)
}

fn terminal_status(cause: FailureCause) -> SolveStatus {
    match cause {
        FailureCause::Ascent | FailureCause::NormGuard => SolveStatus::AscentAfterReset,
        FailureCause::Subproblem | FailureCause::Unreliable => SolveStatus::InfeasibleSubproblem,
    }
}

fn failure_cause(e: &HybridError) -> FailureCause {
    match e {
        HybridError::Unreliable { .. } => FailureCause::Unreliable,
        _ => FailureCause::Subproblem,
    }
}

/// Improved SQP: dense damped-BFGS model, hybrid relaxation of
/// inconsistent QPs, one identity reset per failure.
pub fn solve_isqp(problem: &NlpProblem, x0: &DVector<f64>, cfg: &SolverConfig) -> SolveReport {
    let mut run = Run::new(problem, cfg, "isqp");
    let n = problem.n;
    let Some(mut p) = start_point(&mut run.ev, x0) else {
        return failed_start(problem, x0, cfg, "isqp", run.ev);
    };
    run.record(&p.x);
    let mut model = Model::Dense {
        b: DMatrix::identity(n, n),
        identity: true,
    };
    let mut pen = PenaltyState::zeros(problem.m_eq, problem.m_ineq);
    let ls_cfg = cfg.line_search();
    let mut k = 0;
    let mut last_opt = f64::INFINITY;
    let mut mult: Option<(DVector<f64>, DVector<f64>)> = None;

    macro_rules! done {
        ($status:expr, $pt:expr) => {{
            let m = mult.as_ref().map(|(l, u)| (l, u));
            return run.finish($status, $pt, m, last_opt, k);
        }};
    }

    loop {
        if k >= cfg.max_iterations {
            done!(SolveStatus::MaxIterations, &p);
        }
        let lin = linearize(&p);
        let b = model.dense();
        let res = {
            let mut eng = QpEngine {
                hessian: &b,
                lin: &lin,
                params: &run.params,
            };
            hybrid_solve(&mut eng, &run.relax)
        };
        let failure = match run.absorb(k, res) {
            Err(e) => failure_cause(&e),
            Ok(out) => {
                let d = &out.direction;
                let (lam, mu) = (&out.eq_multipliers, &out.ineq_multipliers);
                mult = Some((lam.clone(), mu.clone()));
                let g1 = check_group1(&p, d, lam, mu, cfg.tol).expect("gradients present");
                last_opt = g1.acc_opt;
                if g1.converged() {
                    done!(SolveStatus::ConvergedGroup1, &p);
                }
                pen = update_penalties(&pen, lam, mu);
                let dphi = merit_directional_derivative(&p, d, &pen).expect("gradients present");
                if dphi >= 0.0 {
                    FailureCause::Ascent
                } else {
                    let phi0 = merit_value(&p, &pen);
                    let ls = match armijo_search(&mut run.ev, &p.x, d, phi0, dphi, &pen, &ls_cfg) {
                        Ok(ls) => ls,
                        Err(LineSearchError::EvaluationFailure { .. }) => {
                            done!(SolveStatus::LineSearchEvaluationFailure, &p)
                        }
                        Err(_) => done!(SolveStatus::LineSearchFailure, &p),
                    };
                    if ls.accepted_by == AcceptedBy::Cap {
                        run.events.push(SolverEvent::CapAccepted {
                            iteration: k,
                            alpha: ls.alpha,
                        });
                    }
                    let mut p_new = ls.point;
                    run.maybe_loosen(k);
                    let g2 = check_group2(&p, &p_new, d, run.tol_tilde);
                    if g2.converged() {
                        last_opt = g2.acc_opt;
                        k += 1;
                        run.record(&p_new.x);
                        done!(SolveStatus::ConvergedGroup2, &p_new);
                    }
                    if run.ev.add_gradients(&mut p_new).is_err() {
                        done!(SolveStatus::EvaluationFailure, &p);
                    }
                    let s = d * ls.alpha;
                    let y = lagrangian_gradient_diff(&p, &p_new, lam, mu).expect("gradients present");
                    if let Ok(bn) = damped_bfgs_dense(&b, &s, &y) {
                        model = Model::Dense { b: bn, identity: false };
                    }
                    p = p_new;
                    k += 1;
                    run.record(&p.x);
                    continue;
                }
            }
        };
        if cfg.enable_resets && !model.is_identity() {
            model.reset(n);
            run.n_reset += 1;
            run.events.push(SolverEvent::Reset {
                iteration: k,
                cause: failure,
            });
            continue;
        }
        done!(terminal_status(failure), &p);
    }
}

/// Improved SLSQP: factored model, dual least-squares subproblems with an
/// accuracy guard and a direction-norm guard, identity reset, then a
/// switch to the QP engine until the next accepted step.
pub fn solve_islsqp(problem: &NlpProblem, x0: &DVector<f64>, cfg: &SolverConfig) -> SolveReport {
    let mut run = Run::new(problem, cfg, "islsqp");
    let n = problem.n;
    let Some(mut p) = start_point(&mut run.ev, x0) else {
        return failed_start(problem, x0, cfg, "islsqp", run.ev);
    };
    run.record(&p.x);
    let mut model = Model::Factored {
        f: LdltFactors::identity(n),
    };
    let mut solver = SubSolver::Lsq;
    let mut d_max: f64 = 0.0;
    let mut pen = PenaltyState::zeros(problem.m_eq, problem.m_ineq);
    let ls_cfg = cfg.line_search();
    let mut k = 0;
    let mut last_opt = f64::INFINITY;
    let mut mult: Option<(DVector<f64>, DVector<f64>)> = None;

    macro_rules! done {
        ($status:expr, $pt:expr) => {{
            let m = mult.as_ref().map(|(l, u)| (l, u));
            return run.finish($status, $pt, m, last_opt, k);
        }};
    }

    'outer: loop {
        if k >= cfg.max_iterations {
            done!(SolveStatus::MaxIterations, &p);
        }
        let lin = linearize(&p);
        let Model::Factored { f } = &model else { unreachable!() };
        let res = match solver {
            SubSolver::Lsq => match form_r_q(f, &lin.grad_f) {
                Ok((r, q)) => {
                    let mut eng = LsqEngine {
                        r: &r,
                        q: &q,
                        lin: &lin,
                        params: &run.params,
                        ldp: &run.ldp,
                    };
                    Some(hybrid_solve(&mut eng, &run.relax))
                }
                Err(_) => None,
            },
            SubSolver::Qp => {
                let b = f.reconstruct();
                let mut eng = QpEngine {
                    hessian: &b,
                    lin: &lin,
                    params: &run.params,
                };
                Some(hybrid_solve(&mut eng, &run.relax))
            }
        };
        let outcome = match res {
            Some(res) => run.absorb(k, res),
            None => Err(HybridError::NoViableDirection),
        };
        let failure = match outcome {
            Err(e) => failure_cause(&e),
            Ok(out) => 'step: {
                let d = &out.direction;
                let (lam, mu) = (&out.eq_multipliers, &out.ineq_multipliers);
                mult = Some((lam.clone(), mu.clone()));
                let g1 = check_group1(&p, d, lam, mu, cfg.tol).expect("gradients present");
                last_opt = g1.acc_opt;
                if g1.converged() {
                    done!(SolveStatus::ConvergedGroup1, &p);
                }
                if solver == SubSolver::Lsq && k >= cfg.warmup_iters && d.norm() > cfg.norm_guard * d_max {
                    break 'step FailureCause::NormGuard;
                }
                pen = update_penalties(&pen, lam, mu);
                let dphi = merit_directional_derivative(&p, d, &pen).expect("gradients present");
                if dphi >= 0.0 {
                    break 'step FailureCause::Ascent;
                }
                let phi0 = merit_value(&p, &pen);
                let ls = match armijo_search(&mut run.ev, &p.x, d, phi0, dphi, &pen, &ls_cfg) {
                    Ok(ls) => ls,
                    Err(LineSearchError::EvaluationFailure { .. }) => {
                        done!(SolveStatus::LineSearchEvaluationFailure, &p)
                    }
                    Err(_) => done!(SolveStatus::LineSearchFailure, &p),
                };
                if ls.accepted_by == AcceptedBy::Cap {
                    run.events.push(SolverEvent::CapAccepted {
                        iteration: k,
                        alpha: ls.alpha,
                    });
                }
                let mut p_new = ls.point;
                run.maybe_loosen(k);
                let g2 = check_group2(&p, &p_new, d, run.tol_tilde);
                if g2.converged() {
                    last_opt = g2.acc_opt;
                    k += 1;
                    run.record(&p_new.x);
                    done!(SolveStatus::ConvergedGroup2, &p_new);
                }
                if run.ev.add_gradients(&mut p_new).is_err() {
                    done!(SolveStatus::EvaluationFailure, &p);
                }
                let s = d * ls.alpha;
                let y = lagrangian_gradient_diff(&p, &p_new, lam, mu).expect("gradients present");
                let bs = f.mul_vec(&s);
                let updated = damped_secant(&bs, &s, &y)
                    .ok()
                    .and_then(|(r, _)| ldl_bfgs_update(f, &s, &r).ok());
                match updated {
                    Some(u) => {
                        if u.reset {
                            run.events.push(SolverEvent::FactorReset { iteration: k });
                        }
                        model = Model::Factored { f: u.factors };
                    }
                    None => run.events.push(SolverEvent::FactorReset { iteration: k }),
                }
                d_max = d_max.max(d.norm());
                if solver == SubSolver::Qp {
                    solver = SubSolver::Lsq;
                    run.events.push(SolverEvent::SolverRestored { iteration: k });
                }
                p = p_new;
                k += 1;
                run.record(&p.x);
                continue 'outer;
            }
        };
        if cfg.enable_resets && !model.is_identity() {
            model.reset(n);
            run.n_reset += 1;
            run.events.push(SolverEvent::Reset {
                iteration: k,
                cause: failure,
            });
            continue;
        }
        if solver != SubSolver::Qp && cfg.enable_qp_fallback {
            solver = SubSolver::Qp;
            run.fallbacks.push(k);
            run.events.push(SolverEvent::Fallback {
                iteration: k,
                cause: failure,
            });
            continue;
        }
        done!(terminal_status(failure), &p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::ldlt_factor;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn ldl_update_fixed_point() {
        let f = LdltFactors::identity(2);
        let e1 = v(&[1.0, 0.0]);
        let u = ldl_bfgs_update(&f, &e1, &e1).unwrap();
        assert!(!u.reset);
        assert!((u.factors.reconstruct() - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn ldl_update_matches_dense_example() {
        let f = LdltFactors::identity(2);
        let e1 = v(&[1.0, 0.0]);
        let u = ldl_bfgs_update(&f, &e1, &(0.2 * &e1)).unwrap();
        assert!((u.factors.d[0] - 0.2).abs() < 1e-14);
        assert!((u.factors.d[1] - 1.0).abs() < 1e-14);
        let dense = damped_bfgs_dense(&DMatrix::identity(2, 2), &e1, &(-0.5 * &e1)).unwrap();
        assert!((u.factors.reconstruct() - &dense).amax() < 1e-14);
        let refac = ldlt_factor(&dense).unwrap();
        assert!((refac.reconstruct() - dense).amax() < 1e-14);
    }

    #[test]
    fn ldl_update_rejects_nonpositive_curvature() {
        let f = LdltFactors::identity(2);
        let e1 = v(&[1.0, 0.0]);
        assert!(ldl_bfgs_update(&f, &e1, &(-1.0 * &e1)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { xi_threshold: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { tol_loosen: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let d = SolverConfig::default().degraded();
        assert!(!d.enable_resets && !d.enable_relaxation2 && !d.cap_acceptance && d.enable_qp_fallback);
    }

    #[test]
    fn status_strings_round_trip() {
        for s in [
            SolveStatus::ConvergedGroup1,
            SolveStatus::ConvergedGroup2,
            SolveStatus::InfeasibleSubproblem,
            SolveStatus::AscentAfterReset,
            SolveStatus::MaxIterations,
            SolveStatus::LineSearchEvaluationFailure,
            SolveStatus::LineSearchFailure,
            SolveStatus::EvaluationFailure,
        ] {
            assert_eq!(SolveStatus::parse(s.as_str()), Some(s));
        }
    }
}
