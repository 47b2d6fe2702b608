use std::path::Path;

use isqp::driver::SolverConfig;
use isqp::problems::{corpus, START_IDS};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Batch definition, read from a TOML document:
///
/// ```toml
/// [problems]
/// ids = ["hs071", "illcond(1e8)"]
///
/// [solvers]
/// names = ["isqp", "islsqp"]
/// tol = 1e-5            # optional
/// max_iterations = 500  # optional
///
/// [noise]
/// magnitudes = [0.0, 1e-6]
/// seeds = [0, 1]
///
/// [starts]
/// ids = ["std", "r1"]
/// ```
///
/// Noise-free runs (`magnitude = 0`) are executed once, not once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub problems: ProblemSection,
    pub solvers: SolverSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub starts: StartSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub names: Vec<String>,
    pub tol: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub magnitudes: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            magnitudes: vec![0.0],
            seeds: default_seeds(),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    pub ids: Vec<String>,
}

impl Default for StartSection {
    fn default() -> Self {
        StartSection {
            ids: vec!["std".to_string()],
        }
    }
}

/// Solver variants the harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Isqp,
    Islsqp,
    /// I-SQP without resets, relaxation 2 or cap acceptance.
    IsqpDegraded,
    /// I-SLSQP with the QP fallback switched off.
    IslsqpNoFallback,
}

impl SolverKind {
    pub const NAMES: [&'static str; 4] = ["isqp", "islsqp", "isqp-degraded", "islsqp-nofallback"];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "isqp" => Some(SolverKind::Isqp),
            "islsqp" => Some(SolverKind::Islsqp),
            "isqp-degraded" => Some(SolverKind::IsqpDegraded),
            "islsqp-nofallback" => Some(SolverKind::IslsqpNoFallback),
            _ => None,
        }
    }

    pub fn configure(self, mut cfg: SolverConfig) -> SolverConfig {
        match self {
            SolverKind::IsqpDegraded => cfg = cfg.degraded(),
            SolverKind::IslsqpNoFallback => cfg.enable_qp_fallback = false,
            _ => {}
        }
        cfg
    }

    pub fn uses_lsq(self) -> bool {
        matches!(self, SolverKind::Islsqp | SolverKind::IslsqpNoFallback)
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Rejects unknown ids and malformed values before anything runs.
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.problems.ids.is_empty() || self.solvers.names.is_empty() {
            return bad("at least one problem and one solver are required".into());
        }
        for id in &self.problems.ids {
            if let Err(e) = corpus(id) {
                return bad(e.to_string());
            }
        }
        for name in &self.solvers.names {
            if SolverKind::parse(name).is_none() {
                return bad(format!("unknown solver '{name}' (expected one of {:?})", SolverKind::NAMES));
            }
        }
        for id in &self.starts.ids {
            if !START_IDS.contains(&id.as_str()) {
                return bad(format!("unknown start '{id}' (expected one of {START_IDS:?})"));
            }
        }
        if self.noise.magnitudes.is_empty() || self.noise.magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return bad("noise magnitudes must be finite and nonnegative".into());
        }
        if self.noise.seeds.is_empty() {
            return bad("at least one noise seed is required".into());
        }
        if let Some(t) = self.solvers.tol {
            if !(t > 0.0) {
                return bad(format!("tol must be positive, got {t}"));
            }
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(t) = self.solvers.tol {
            cfg.tol = t;
        }
        if let Some(m) = self.solvers.max_iterations {
            cfg.max_iterations = m;
        }
        cfg
    }
}
