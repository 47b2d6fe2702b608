//! Globalization: L1 merit, penalty updates, Armijo backtracking, damped
//! BFGS and the two groups of stopping tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{EvalError, Gradients, NlpProblem};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StepError {
    #[error("gradients were not evaluated at this point")]
    MissingGradients,
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    /// `ρ`, one per equality.
    pub eq: DVector<f64>,
    /// `v`, one per inequality.
    pub ineq: DVector<f64>,
}

impl PenaltyState {
    pub fn zeros(m_eq: usize, m_ineq: usize) -> Self {
        PenaltyState {
            eq: DVector::zeros(m_eq),
            ineq: DVector::zeros(m_ineq),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalPoint {
    pub x: DVector<f64>,
    pub f: f64,
    pub g: DVector<f64>,
    pub h: DVector<f64>,
    pub grads: Option<Gradients>,
}

impl EvalPoint {
    pub fn grads(&self) -> Result<&Gradients, StepError> {
        self.grads.as_ref().ok_or(StepError::MissingGradients)
    }

    /// `Σ|h| + Σ max(0, −g)`.
    pub fn infeasibility(&self) -> f64 {
        infeasibility(&self.h, &self.g)
    }
}

pub(crate) fn infeasibility(h: &DVector<f64>, g: &DVector<f64>) -> f64 {
    h.iter().map(|v| v.abs()).sum::<f64>() + g.iter().map(|v| (-v).max(0.0)).sum::<f64>()
}

/// Problem handle that counts evaluations and rejects non-finite output.
pub struct Evaluator<'a> {
    problem: &'a NlpProblem,
    pub n_f: usize,
    pub n_grad: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a NlpProblem) -> Self {
        Evaluator {
            problem,
            n_f: 0,
            n_grad: 0,
        }
    }

    pub fn problem(&self) -> &NlpProblem {
        self.problem
    }

    pub fn point(&mut self, x: &DVector<f64>) -> Result<EvalPoint, EvalError> {
        self.n_f += 1;
        let v = (self.problem.evaluate)(x)?;
        if !v.f.is_finite() || v.g.iter().chain(v.h.iter()).any(|c| !c.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(EvalPoint {
            x: x.clone(),
            f: v.f,
            g: v.g,
            h: v.h,
            grads: None,
        })
    }

    pub fn add_gradients(&mut self, p: &mut EvalPoint) -> Result<(), EvalError> {
        self.n_grad += 1;
        let gr = (self.problem.gradients)(&p.x)?;
        let finite = gr
            .grad_f
            .iter()
            .chain(gr.jac_g.iter())
            .chain(gr.jac_h.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(EvalError::NonFinite);
        }
        p.grads = Some(gr);
        Ok(())
    }
}

/// `φ = f + Σ ρ_j |h_j| + Σ v_j max(0, −g_j)`.
pub fn merit_value(p: &EvalPoint, pen: &PenaltyState) -> f64 {
    let eq: f64 = p.h.iter().zip(pen.eq.iter()).map(|(h, r)| r * h.abs()).sum();
    let ineq: f64 = p
        .g
        .iter()
        .zip(pen.ineq.iter())
        .map(|(g, v)| v * (-g).max(0.0))
        .sum();
    p.f + eq + ineq
}

/// `Dφ = ∇fᵀd − Σ ρ_j |h_j| − Σ v_j max(0, −g_j)`.
pub fn merit_directional_derivative(
    p: &EvalPoint,
    d: &DVector<f64>,
    pen: &PenaltyState,
) -> Result<f64, StepError> {
    let gr = p.grads()?;
    let eq: f64 = p.h.iter().zip(pen.eq.iter()).map(|(h, r)| r * h.abs()).sum();
    let ineq: f64 = p
        .g
        .iter()
        .zip(pen.ineq.iter())
        .map(|(g, v)| v * (-g).max(0.0))
        .sum();
    Ok(gr.grad_f.dot(d) - eq - ineq)
}

/// `ρ' = max(|λ|, (ρ + |λ|)/2)` elementwise, likewise for `v` and `μ`.
pub fn update_penalties(pen: &PenaltyState, lambda: &DVector<f64>, mu: &DVector<f64>) -> PenaltyState {
    let upd = |p: &DVector<f64>, m: &DVector<f64>| {
        p.zip_map(m, |p, m| {
            let a = m.abs();
            a.max(0.5 * (p + a))
        })
    };
    PenaltyState {
        eq: upd(&pen.eq, lambda),
        ineq: upd(&pen.ineq, mu),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptedBy {
    Armijo,
    Cap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchConfig {
    pub eta: f64,
    pub max_trials: usize,
    /// Accept the last trial when none passes the Armijo test.
    pub cap_acceptance: bool,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            eta: 0.1,
            max_trials: 10,
            cap_acceptance: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub point: EvalPoint,
    pub accepted_by: AcceptedBy,
    pub trials: usize,
    pub failed_evaluations: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LineSearchError {
    #[error("directional derivative {0:e} is not negative")]
    NotDescent(f64),
    #[error("every trial point failed to evaluate ({trials} trials)")]
    EvaluationFailure { trials: usize },
    #[error("no trial passed the sufficient-decrease test ({trials} trials)")]
    NoAcceptableStep { trials: usize },
}

/// Backtracking from `α = 1` by halving.
///
/// A trial whose evaluation fails counts as infinite merit. With cap
/// acceptance on, the smallest successfully evaluated trial is taken when
/// none passes.
pub fn armijo_search(
    ev: &mut Evaluator<'_>,
    x: &DVector<f64>,
    d: &DVector<f64>,
    merit0: f64,
    dphi: f64,
    pen: &PenaltyState,
    cfg: &LineSearchConfig,
) -> Result<LineSearchOutcome, LineSearchError> {
    if !(dphi < 0.0) {
        return Err(LineSearchError::NotDescent(dphi));
    }
    let mut alpha = 1.0;
    let mut last_ok: Option<(f64, EvalPoint)> = None;
    let mut failed = 0;
    for trial in 1..=cfg.max_trials {
        let xt = x + d * alpha;
        match ev.point(&xt) {
            Ok(p) => {
                let phi = merit_value(&p, pen);
                if phi - merit0 < alpha * cfg.eta * dphi {
                    return Ok(LineSearchOutcome {
                        alpha,
                        point: p,
                        accepted_by: AcceptedBy::Armijo,
                        trials: trial,
                        failed_evaluations: failed,
                    });
                }
                last_ok = Some((alpha, p));
            }
            Err(_) => failed += 1,
        }
        if trial < cfg.max_trials {
            alpha *= 0.5;
        }
    }
    match last_ok {
        None => Err(LineSearchError::EvaluationFailure {
            trials: cfg.max_trials,
        }),
        Some(_) if !cfg.cap_acceptance => Err(LineSearchError::NoAcceptableStep {
            trials: cfg.max_trials,
        }),
        Some((alpha, point)) => Ok(LineSearchOutcome {
            alpha,
            point,
            accepted_by: AcceptedBy::Cap,
            trials: cfg.max_trials,
            failed_evaluations: failed,
        }),
    }
}

/// Powell damping: returns `(r, θ)` with `r = θ y + (1 − θ) B s`.
///
/// `θ = 1` when `sᵀy ≥ 0.2 sᵀBs`, else `0.8 sᵀBs / (sᵀBs − sᵀy)`.
pub fn damped_secant(bs: &DVector<f64>, s: &DVector<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64), StepError> {
    let sbs = s.dot(bs);
    if !(sbs > 0.0) {
        return Err(StepError::Contract(format!("sᵀBs = {sbs:e} is not positive")));
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    Ok((y * theta + bs * (1.0 - theta), theta))
}

/// Damped BFGS update of a dense SPD matrix.
pub fn damped_bfgs_dense(b: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>, StepError> {
    let n = b.nrows();
    if b.ncols() != n || s.len() != n || y.len() != n {
        return Err(StepError::Contract("bfgs dimension mismatch".into()));
    }
    let bs = b * s;
    let (r, _) = damped_secant(&bs, s, y)?;
    let sbs = s.dot(&bs);
    let sr = s.dot(&r);
    let mut out = b + &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
    // keep exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// `∇ₓL(x_new) − ∇ₓL(x_old)` with `∇ₓL = ∇f − ∇h·λ − ∇g·μ`.
pub fn lagrangian_gradient_diff(
    old: &EvalPoint,
    new: &EvalPoint,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<DVector<f64>, StepError> {
    let grad_l = |p: &EvalPoint| -> Result<DVector<f64>, StepError> {
        let gr = p.grads()?;
        Ok(&gr.grad_f - gr.jac_h.tr_mul(lambda) - gr.jac_g.tr_mul(mu))
    };
    Ok(grad_l(new)? - grad_l(old)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SatisfiedGroup {
    None,
    Group1Opt,
    Group1Step,
    Group2Opt,
    Group2Step,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub acc_inf: f64,
    pub acc_opt: f64,
    pub acc_step: f64,
    pub satisfied: SatisfiedGroup,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.satisfied != SatisfiedGroup::None
    }
}

/// First group: infeasibility below `tol` together with either the
/// optimality measure or the direction norm.
pub fn check_group1(
    p: &EvalPoint,
    d: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
    tol: f64,
) -> Result<ConvergenceReport, StepError> {
    let gr = p.grads()?;
    let acc_inf = p.infeasibility();
    let acc_opt = gr.grad_f.dot(d).abs()
        + lambda.iter().zip(p.h.iter()).map(|(l, h)| l.abs() * h.abs()).sum::<f64>()
        + mu
            .iter()
            .zip(p.g.iter())
            .map(|(m, g)| m.abs() * (-g).max(0.0))
            .sum::<f64>();
    let acc_step = d.norm();
    let satisfied = if acc_inf >= tol {
        SatisfiedGroup::None
    } else if acc_opt < tol {
        SatisfiedGroup::Group1Opt
    } else if acc_step < tol {
        SatisfiedGroup::Group1Step
    } else {
        SatisfiedGroup::None
    };
    Ok(ConvergenceReport {
        acc_inf,
        acc_opt,
        acc_step,
        satisfied,
    })
}

/// Tolerance for the second group: `τ·tol` once `n_reset ≥ ī_reset`,
/// `tol` before that.
pub fn group2_tolerance(tol: f64, tau: f64, n_reset: usize, reset_limit: usize) -> f64 {
    if n_reset >= reset_limit {
        tau * tol
    } else {
        tol
    }
}

/// Second group, evaluated after a step: infeasibility at the new point
/// with either the objective change or the direction norm, against `tol_tilde`.
pub fn check_group2(old: &EvalPoint, new: &EvalPoint, d: &DVector<f64>, tol_tilde: f64) -> ConvergenceReport {
    let acc_inf = new.infeasibility();
    let acc_opt = (new.f - old.f).abs();
    let acc_step = d.norm();
    let satisfied = if acc_inf >= tol_tilde {
        SatisfiedGroup::None
    } else if acc_opt < tol_tilde {
        SatisfiedGroup::Group2Opt
    } else if acc_step < tol_tilde {
        SatisfiedGroup::Group2Step
    } else {
        SatisfiedGroup::None
    };
    ConvergenceReport {
        acc_inf,
        acc_opt,
        acc_step,
        satisfied,
    }
}
