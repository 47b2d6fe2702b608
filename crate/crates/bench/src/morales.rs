use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::records::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoralesEntry {
    pub instance: String,
    pub gamma_f: f64,
    pub gamma_t: f64,
}

/// Paired comparison of two run lists.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MoralesProfile {
    /// Sorted ascending by `gamma_f`.
    pub by_objective: Vec<MoralesEntry>,
    /// Sorted ascending by `gamma_t`.
    pub by_time: Vec<MoralesEntry>,
    /// Pairs where at least one run did not converge.
    pub excluded_nonconverged: usize,
    /// Pairs whose ratio is not positive, with the reason.
    pub undefined: Vec<(String, String)>,
    /// Instances present in only one list.
    pub unmatched: usize,
}

/// `log₂(a/b)`, defined only for two positive values.
pub fn log_ratio(a: f64, b: f64) -> Option<f64> {
    (a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()).then(|| (a / b).log2())
}

/// Pairs records by problem, start and noise, then profiles objective and
/// wall time of `a` against `b`.
pub fn morales(a: &[RunRecord], b: &[RunRecord]) -> MoralesProfile {
    let index: HashMap<String, &RunRecord> = b.iter().map(|r| (r.instance(), r)).collect();
    let mut prof = MoralesProfile::default();
    let mut matched = 0;
    for ra in a {
        let key = ra.instance();
        let Some(rb) = index.get(&key) else {
            prof.unmatched += 1;
            continue;
        };
        matched += 1;
        if !(ra.converged() && rb.converged()) {
            prof.excluded_nonconverged += 1;
            continue;
        }
        let Some(gamma_f) = log_ratio(ra.f_star, rb.f_star) else {
            prof.undefined.push((key, format!("objectives {} and {}", ra.f_star, rb.f_star)));
            continue;
        };
        let Some(gamma_t) = log_ratio(ra.wall_s, rb.wall_s) else {
            prof.undefined.push((key, format!("times {} and {}", ra.wall_s, rb.wall_s)));
            continue;
        };
        prof.by_objective.push(MoralesEntry {
            instance: key,
            gamma_f,
            gamma_t,
        });
    }
    prof.unmatched += b.len() - matched;
    prof.by_time = prof.by_objective.clone();
    prof.by_objective.sort_by(|x, y| x.gamma_f.total_cmp(&y.gamma_f).then_with(|| x.instance.cmp(&y.instance)));
    prof.by_time.sort_by(|x, y| x.gamma_t.total_cmp(&y.gamma_t).then_with(|| x.instance.cmp(&y.instance)));
    prof
}

/// Two-column sorted table: `rank,gamma_f,instance_f,gamma_t,instance_t`.
pub fn write_profile<W: std::io::Write>(p: &MoralesProfile, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "# excluded_nonconverged={} undefined={} unmatched={}",
        p.excluded_nonconverged,
        p.undefined.len(),
        p.unmatched
    )?;
    writeln!(out, "rank,gamma_f,instance_f,gamma_t,instance_t")?;
    for (i, (f, t)) in p.by_objective.iter().zip(&p.by_time).enumerate() {
        writeln!(out, "{},{},{},{},{}", i + 1, f.gamma_f, f.instance, t.gamma_t, t.instance)?;
    }
    Ok(())
}
