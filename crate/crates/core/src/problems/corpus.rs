use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::families::{IllCond, IncAnnulus, IncCircle, IncPair, InfeasiblePair, TinyResidual};
use super::{from_model, hs, splitmix64, KnownOptimum, NlpProblem, ProblemError, SmoothModel};

/// Start identifiers: the standard start plus five deterministic perturbations.
pub const START_IDS: [&str; 6] = ["std", "r1", "r2", "r3", "r4", "r5"];

const ILLCOND_LEVELS: [&str; 4] = ["1e2", "1e5", "1e7", "1e8"];
const TINY_LEVELS: [&str; 3] = ["1e7", "3e7", "1e8"];

/// Every identifier accepted by [`corpus`] without parameters, plus the
/// default members of each parameterized family.
pub fn corpus_ids() -> Vec<String> {
    let mut ids: Vec<String> = hs::TABLE.iter().map(|t| t.0.to_string()).collect();
    ids.extend(ILLCOND_LEVELS.iter().map(|c| format!("illcond({c})")));
    ids.extend(
        ["incons-pair", "incons-circle", "incons-annulus", "infeasible-pair"]
            .iter()
            .map(|s| s.to_string()),
    );
    ids.extend(TINY_LEVELS.iter().map(|s| format!("tiny-residual({s})")));
    ids
}

fn parse_param(id: &str, family: &str) -> Option<f64> {
    let rest = id.strip_prefix(family)?.strip_prefix('(')?.strip_suffix(')')?;
    rest.trim().parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0)
}

fn known(x: &[f64], f: f64, provenance: &str) -> Option<KnownOptimum> {
    Some(KnownOptimum {
        x: DVector::from_column_slice(x),
        f,
        provenance: provenance.to_string(),
    })
}

fn build<M: SmoothModel>(
    id: &str,
    model: M,
    start: &[f64],
    opt: Option<KnownOptimum>,
) -> NlpProblem {
    from_model(id, model, DVector::from_column_slice(start), opt)
}

macro_rules! hs_dispatch {
    ($id:expr, $f:expr, $x:expr, $x0:expr; $($key:literal => $model:expr),* $(,)?) => {
        match $id {
            $($key => Some(build($id, $model, $x0, known($x, $f, provenance($id)))),)*
            _ => None,
        }
    };
}

fn provenance(id: &str) -> &'static str {
    if id.starts_with("hs") {
        "Hock-Schittkowski collection, KKT-polished"
    } else {
        "closed form"
    }
}

fn hs_problem(id: &str) -> Option<NlpProblem> {
    let &(_, f, x, x0) = hs::TABLE.iter().find(|t| t.0 == id)?;
    use hs::*;
    hs_dispatch!(id, f, x, x0;
        "eqline" => EqLine,
        "hs001" => Hs001, "hs006" => Hs006, "hs007" => Hs007, "hs010" => Hs010,
        "hs011" => Hs011, "hs012" => Hs012, "hs013" => Hs013, "hs014" => Hs014, "hs015" => Hs015,
        "hs016" => Hs016, "hs017" => Hs017, "hs018" => Hs018, "hs021" => Hs021, "hs022" => Hs022,
        "hs023" => Hs023, "hs026" => Hs026, "hs028" => Hs028, "hs035" => Hs035,
        "hs039" => Hs039, "hs040" => Hs040, "hs042" => Hs042, "hs043" => Hs043,
        "hs048" => Hs048, "hs051" => Hs051, "hs052" => Hs052, "hs060" => Hs060, "hs063" => Hs063,
        "hs065" => Hs065, "hs071" => Hs071, "hs076" => Hs076, "hs078" => Hs078,
        "hs079" => Hs079, "hs100" => Hs100,
    )
}

/// Looks up a corpus problem by identifier.
pub fn corpus(id: &str) -> Result<NlpProblem, ProblemError> {
    if let Some(p) = hs_problem(id) {
        return Ok(p);
    }
    if let Some(c) = parse_param(id, "illcond") {
        let m = IllCond::new(c);
        let start = m.to_x(&[-1.0, -1.0, 3.0, 3.0]);
        let xs = m.to_x(&[1.0, 1.0, 1.0, 1.0]);
        let opt = known(xs.as_slice(), 1.0, "constructed");
        return Ok(build(id, m, start.as_slice(), opt));
    }
    if let Some(s) = parse_param(id, "tiny-residual") {
        let opt = known(&[1.0, 0.0], 0.5 - s, "constructed");
        return Ok(build(id, TinyResidual { scale: s }, &[0.0, 0.5], opt));
    }
    let p = match id {
        "incons-pair" => build(id, IncPair, &[0.1], known(&[1.0], 0.25, "closed form")),
        "incons-circle" => {
            let r = 5f64.sqrt();
            build(
                id,
                IncCircle,
                &[0.0, 0.0],
                known(&[2.0 / r, 1.0 / r], 6.0 - 2.0 * r, "closed form"),
            )
        }
        "incons-annulus" => build(
            id,
            IncAnnulus,
            &[0.0, 0.0],
            known(&[-3.0, -3.0], -6.0, "closed form"),
        ),
        "infeasible-pair" => build(id, InfeasiblePair, &[0.0], None),
        _ => return Err(ProblemError::UnknownProblem(id.to_string())),
    };
    Ok(p)
}

/// Standard start or one of the deterministic perturbations `r1`..`r5`.
///
/// A perturbation moves each coordinate by up to `10%·max(1, |x_i|)`.
pub fn start_point(p: &NlpProblem, start_id: &str) -> Result<DVector<f64>, ProblemError> {
    if start_id == "std" {
        return Ok(p.start.clone());
    }
    let k: u64 = start_id
        .strip_prefix('r')
        .and_then(|s| s.parse().ok())
        .filter(|k| (1..=5).contains(k))
        .ok_or_else(|| ProblemError::UnknownStart(start_id.to_string()))?;
    let name_hash = p
        .name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| splitmix64(h ^ b as u64));
    let mut x = p.start.clone();
    for (i, xi) in x.iter_mut().enumerate() {
        let h = splitmix64(name_hash ^ splitmix64(k * 1_000_003 + i as u64));
        let u = (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        *xi += 0.1 * xi.abs().max(1.0) * u;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub n: usize,
    pub m_eq: usize,
    pub m_ineq: usize,
    pub classification: Option<String>,
    pub f_star: Option<f64>,
    pub provenance: String,
}

/// Catalog rows for every default corpus member.
pub fn manifest_entries() -> Vec<ManifestEntry> {
    corpus_ids()
        .iter()
        .map(|id| {
            let p = corpus(id).expect("listed ids resolve");
            ManifestEntry {
                name: p.name.clone(),
                n: p.n,
                m_eq: p.m_eq,
                m_ineq: p.m_ineq,
                classification: p.classification.map(|c| c.as_str().to_string()),
                f_star: p.known_optimum.as_ref().map(|o| o.f),
                provenance: p
                    .known_optimum
                    .as_ref()
                    .map(|o| o.provenance.clone())
                    .unwrap_or_else(|| "no feasible point".to_string()),
            }
        })
        .collect()
}
