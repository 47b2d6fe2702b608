//! NLP problem abstraction, test corpus, noise injection and diagnostics.
//!
//! Problems are `min f(x)` subject to `h(x) = 0` and `g(x) ≥ 0`. Variable
//! bounds are written as ordinary inequalities.

mod corpus;
mod families;
mod hs;

pub use corpus::{corpus, corpus_ids, manifest_entries, start_point, ManifestEntry, START_IDS};
pub use families::ILLCOND_EPS;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_dual::{Dual64, DualNum, HyperDual64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{condition_number, eliminate_equalities, LinalgError};

/// Reduced-Hessian condition number above which a problem is ill-conditioned.
pub const ILL_CONDITIONED_ABOVE: f64 = 1e6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("evaluation produced a non-finite value")]
    NonFinite,
    #[error("evaluation failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem id `{0}`")]
    UnknownProblem(String),
    #[error("unknown start id `{0}`")]
    UnknownStart(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Values {
    pub f: f64,
    pub g: DVector<f64>,
    pub h: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grad_f: DVector<f64>,
    /// `m_I × n`.
    pub jac_g: DMatrix<f64>,
    /// `m_E × n`.
    pub jac_h: DMatrix<f64>,
}

pub type ValueFn = Arc<dyn Fn(&DVector<f64>) -> Result<Values, EvalError> + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&DVector<f64>) -> Result<Gradients, EvalError> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    WellConditioned,
    IllConditioned,
}

impl Conditioning {
    pub fn from_condition(kappa: f64) -> Self {
        if kappa > ILL_CONDITIONED_ABOVE {
            Conditioning::IllConditioned
        } else {
            Conditioning::WellConditioned
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Conditioning::WellConditioned => "well-conditioned",
            Conditioning::IllConditioned => "ill-conditioned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownOptimum {
    pub x: DVector<f64>,
    pub f: f64,
    pub provenance: String,
}

#[derive(Clone)]
pub struct NlpProblem {
    pub name: String,
    pub n: usize,
    pub m_eq: usize,
    pub m_ineq: usize,
    pub evaluate: ValueFn,
    pub gradients: GradientFn,
    pub known_optimum: Option<KnownOptimum>,
    pub classification: Option<Conditioning>,
    /// Reduced-Hessian condition number at the known optimum.
    pub reduced_condition: Option<f64>,
    pub start: DVector<f64>,
}

impl std::fmt::Debug for NlpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NlpProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m_eq", &self.m_eq)
            .field("m_ineq", &self.m_ineq)
            .field("classification", &self.classification)
            .finish_non_exhaustive()
    }
}

impl NlpProblem {
    pub fn values(&self, x: &DVector<f64>) -> Result<Values, EvalError> {
        (self.evaluate)(x)
    }

    pub fn grads(&self, x: &DVector<f64>) -> Result<Gradients, EvalError> {
        (self.gradients)(x)
    }

    /// `Σ|h_j| + Σ max(0, −g_j)` at `x`.
    pub fn infeasibility(&self, x: &DVector<f64>) -> Result<f64, EvalError> {
        let v = self.values(x)?;
        Ok(v.h.iter().map(|h| h.abs()).sum::<f64>() + v.g.iter().map(|g| (-g).max(0.0)).sum::<f64>())
    }
}

/// Scalar types a smooth model can be evaluated with.
pub trait Scalar: DualNum<Primitive = f64> + Copy {}
impl<T: DualNum<Primitive = f64> + Copy> Scalar for T {}

pub struct ModelOutputs<D> {
    pub f: D,
    pub h: Vec<D>,
    pub g: Vec<D>,
}

/// A problem written once and evaluated with plain or dual numbers.
pub trait SmoothModel: Send + Sync + 'static {
    fn eval<D: Scalar>(&self, x: &[D]) -> ModelOutputs<D>;
}

fn to_values(o: ModelOutputs<f64>) -> Values {
    Values {
        f: o.f,
        g: DVector::from_vec(o.g),
        h: DVector::from_vec(o.h),
    }
}

/// Forward-mode gradients, one dual pass per coordinate.
pub fn model_gradients<M: SmoothModel>(model: &M, x: &DVector<f64>) -> Gradients {
    let n = x.len();
    let mut grad_f = DVector::zeros(n);
    let mut jac_g = DMatrix::zeros(0, n);
    let mut jac_h = DMatrix::zeros(0, n);
    for i in 0..n {
        let xd: Vec<Dual64> = (0..n)
            .map(|j| Dual64::new(x[j], if i == j { 1.0 } else { 0.0 }))
            .collect();
        let out = model.eval(&xd);
        if i == 0 {
            jac_g = DMatrix::zeros(out.g.len(), n);
            jac_h = DMatrix::zeros(out.h.len(), n);
        }
        grad_f[i] = out.f.eps;
        for (k, g) in out.g.iter().enumerate() {
            jac_g[(k, i)] = g.eps;
        }
        for (k, h) in out.h.iter().enumerate() {
            jac_h[(k, i)] = h.eps;
        }
    }
    Gradients {
        grad_f,
        jac_g,
        jac_h,
    }
}

/// Exact Hessian of `f − λᵀh − μᵀg` by hyper-dual evaluation.
pub fn model_lagrangian_hessian<M: SmoothModel>(
    model: &M,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let xd: Vec<HyperDual64> = (0..n)
                .map(|k| {
                    HyperDual64::new(
                        x[k],
                        if k == i { 1.0 } else { 0.0 },
                        if k == j { 1.0 } else { 0.0 },
                        0.0,
                    )
                })
                .collect();
            let out = model.eval(&xd);
            let mut v = out.f.eps1eps2;
            for (k, h) in out.h.iter().enumerate() {
                v -= lambda[k] * h.eps1eps2;
            }
            for (k, g) in out.g.iter().enumerate() {
                v -= mu[k] * g.eps1eps2;
            }
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Builds an [`NlpProblem`] from a smooth model.
pub fn from_model<M: SmoothModel>(
    name: &str,
    model: M,
    start: DVector<f64>,
    known_optimum: Option<KnownOptimum>,
) -> NlpProblem {
    let model = Arc::new(model);
    let n = start.len();
    let probe = model.eval(start.as_slice());
    let (m_eq, m_ineq) = (probe.h.len(), probe.g.len());
    let reduced_condition = known_optimum
        .as_ref()
        .and_then(|opt| optimum_reduced_condition(model.as_ref(), &opt.x).ok());
    let m1 = model.clone();
    let m2 = model.clone();
    NlpProblem {
        name: name.to_string(),
        n,
        m_eq,
        m_ineq,
        evaluate: Arc::new(move |x: &DVector<f64>| Ok(to_values(m1.eval(x.as_slice())))),
        gradients: Arc::new(move |x: &DVector<f64>| Ok(model_gradients(m2.as_ref(), x))),
        known_optimum,
        classification: reduced_condition.map(Conditioning::from_condition),
        reduced_condition,
        start,
    }
}

/// Active rows at `x` (equalities plus inequalities with `|g_j| ≤ 1e-6`).
fn active_jacobian(values: &Values, grads: &Gradients) -> DMatrix<f64> {
    let n = grads.grad_f.len();
    let act: Vec<usize> = (0..values.g.len())
        .filter(|&j| values.g[j].abs() <= 1e-6)
        .collect();
    let mut a = DMatrix::zeros(values.h.len() + act.len(), n);
    for i in 0..values.h.len() {
        a.set_row(i, &grads.jac_h.row(i));
    }
    for (k, &j) in act.iter().enumerate() {
        a.set_row(values.h.len() + k, &grads.jac_g.row(j));
    }
    a
}

/// Reduced Lagrangian-Hessian condition at `x` with least-squares multipliers.
pub fn optimum_reduced_condition<M: SmoothModel>(
    model: &M,
    x: &DVector<f64>,
) -> Result<f64, ProblemError> {
    let values = to_values(model.eval(x.as_slice()));
    let grads = model_gradients(model, x);
    let a = active_jacobian(&values, &grads);
    let m_eq = values.h.len();
    let n = x.len();
    let mut lambda = DVector::zeros(m_eq);
    let mut mu = DVector::zeros(values.g.len());
    if a.nrows() > 0 {
        let mult = a
            .transpose()
            .svd(true, true)
            .solve(&grads.grad_f, 1e-12)
            .map_err(|e| LinalgError::Contract(e.to_string()))?;
        lambda.copy_from(&mult.rows(0, m_eq));
        let mut k = m_eq;
        for j in 0..values.g.len() {
            if values.g[j].abs() <= 1e-6 {
                mu[j] = mult[k];
                k += 1;
            }
        }
    }
    let hess = model_lagrangian_hessian(model, x, &lambda, &mu);
    // keep only independent rows so the null space has the right dimension
    let rank = crate::numkit::numerical_rank(&a, 1e-10);
    if rank == n {
        return Ok(1.0);
    }
    reduced_hessian_condition(&hess, &a)
}

/// `cond(Zᵀ B Z)` with `Z` an orthonormal null-space basis of the active rows.
pub fn reduced_hessian_condition(
    b: &DMatrix<f64>,
    active_jacobian: &DMatrix<f64>,
) -> Result<f64, ProblemError> {
    let n = b.nrows();
    let a = if active_jacobian.nrows() == 0 {
        DMatrix::zeros(0, n)
    } else {
        active_jacobian.clone()
    };
    let elim = eliminate_equalities(&a, &DVector::zeros(a.nrows()))?;
    let z = &elim.basis;
    if z.ncols() == 0 {
        return Ok(1.0);
    }
    let br = z.tr_mul(&(b * z));
    Ok(condition_number(&br))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseTargets {
    pub objective: bool,
    pub constraints: bool,
    pub gradients: bool,
}

impl Default for NoiseTargets {
    fn default() -> Self {
        NoiseTargets {
            objective: true,
            constraints: true,
            gradients: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub magnitude: f64,
    pub seed: u64,
    #[serde(default)]
    pub targets: NoiseTargets,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn point_hash(x: &DVector<f64>, seed: u64) -> u64 {
    x.iter()
        .fold(splitmix64(seed), |h, v| splitmix64(h ^ v.to_bits()))
}

/// Deterministic value in `[−1, 1]` for a point hash and output tag.
fn unit_noise(point: u64, tag: u64) -> f64 {
    let h = splitmix64(point ^ splitmix64(tag));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Wraps a problem with multiplicative, point-deterministic noise.
pub fn with_noise(p: &NlpProblem, spec: NoiseSpec) -> NlpProblem {
    if spec.magnitude == 0.0 {
        return p.clone();
    }
    let mut out = p.clone();
    let (eval, grads) = (p.evaluate.clone(), p.gradients.clone());
    let s = spec;
    out.evaluate = Arc::new(move |x: &DVector<f64>| {
        let mut v = eval(x)?;
        let ph = point_hash(x, s.seed);
        if s.targets.objective {
            v.f *= 1.0 + s.magnitude * unit_noise(ph, 0);
        }
        if s.targets.constraints {
            let mg = v.g.len() as u64;
            for (j, g) in v.g.iter_mut().enumerate() {
                *g *= 1.0 + s.magnitude * unit_noise(ph, 1 + j as u64);
            }
            for (j, h) in v.h.iter_mut().enumerate() {
                *h *= 1.0 + s.magnitude * unit_noise(ph, 1 + mg + j as u64);
            }
        }
        Ok(v)
    });
    out.gradients = Arc::new(move |x: &DVector<f64>| {
        let mut gr = grads(x)?;
        if s.targets.gradients {
            let ph = point_hash(x, s.seed ^ 0x6772_6164);
            let mut tag = 0u64;
            let mut bump = |v: &mut f64| {
                *v *= 1.0 + s.magnitude * unit_noise(ph, tag);
                tag += 1;
            };
            gr.grad_f.iter_mut().for_each(&mut bump);
            gr.jac_g.iter_mut().for_each(&mut bump);
            gr.jac_h.iter_mut().for_each(&mut bump);
        }
        Ok(gr)
    });
    out
}

/// Worst relative error between analytic and central-difference gradients.
///
/// Each entry is compared as `|a − fd| / max(1, ‖row‖∞)`, where the row is
/// the analytic gradient of the same output.
pub fn finite_diff_check(p: &NlpProblem, x: &DVector<f64>, h: f64) -> Result<f64, EvalError> {
    let gr = p.grads(x)?;
    let n = x.len();
    let mut worst: f64 = 0.0;
    let fscale = gr.grad_f.amax().max(1.0);
    let gscale: Vec<f64> = (0..p.m_ineq).map(|j| gr.jac_g.row(j).amax().max(1.0)).collect();
    let hscale: Vec<f64> = (0..p.m_eq).map(|j| gr.jac_h.row(j).amax().max(1.0)).collect();
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let vp = p.values(&xp)?;
        let vm = p.values(&xm)?;
        let d = 2.0 * h;
        worst = worst.max((gr.grad_f[i] - (vp.f - vm.f) / d).abs() / fscale);
        for j in 0..p.m_ineq {
            worst = worst.max((gr.jac_g[(j, i)] - (vp.g[j] - vm.g[j]) / d).abs() / gscale[j]);
        }
        for j in 0..p.m_eq {
            worst = worst.max((gr.jac_h[(j, i)] - (vp.h[j] - vm.h[j]) / d).abs() / hscale[j]);
        }
    }
    Ok(worst)
}
