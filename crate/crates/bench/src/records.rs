use std::fmt;
use std::path::Path;
use std::str::FromStr;

use isqp::driver::{SolveReport, SolverEvent};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::BenchError;

/// Noise magnitude and seed, written as `0` for noise-free runs and
/// `<magnitude>@<seed>` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLabel {
    pub magnitude: f64,
    pub seed: u64,
}

impl NoiseLabel {
    pub fn none() -> Self {
        NoiseLabel { magnitude: 0.0, seed: 0 }
    }
}

impl fmt::Display for NoiseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.magnitude == 0.0 {
            write!(f, "0")
        } else {
            write!(f, "{:e}@{}", self.magnitude, self.seed)
        }
    }
}

impl FromStr for NoiseLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "0" {
            return Ok(NoiseLabel::none());
        }
        let (m, seed) = s.split_once('@').ok_or_else(|| format!("bad noise label '{s}'"))?;
        let magnitude: f64 = m.parse().map_err(|_| format!("bad noise magnitude '{m}'"))?;
        let seed: u64 = seed.parse().map_err(|_| format!("bad noise seed '{seed}'"))?;
        Ok(NoiseLabel { magnitude, seed })
    }
}

impl Serialize for NoiseLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NoiseLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub start: String,
    pub solver: String,
    pub noise: NoiseLabel,
    pub status: String,
    pub f_star: f64,
    pub acc_inf: f64,
    pub n_f: usize,
    pub n_grad: usize,
    pub iters: usize,
    /// Wall-clock seconds; stands in for simulation time.
    pub wall_s: f64,
    pub n_sub0: usize,
    pub n_sub1: usize,
    pub n_sub2: usize,
    pub n_reset: usize,
    pub n_fallback: usize,
}

impl RunRecord {
    pub fn from_report(problem: &str, start: &str, solver: &str, noise: NoiseLabel, r: &SolveReport, wall_s: f64) -> Self {
        RunRecord {
            problem: problem.to_string(),
            start: start.to_string(),
            solver: solver.to_string(),
            noise,
            status: r.status.as_str().to_string(),
            f_star: r.f_star,
            acc_inf: r.acc_inf,
            n_f: r.n_f,
            n_grad: r.n_grad,
            iters: r.iterations,
            wall_s,
            n_sub0: r.subproblem_counts[0],
            n_sub1: r.subproblem_counts[1],
            n_sub2: r.subproblem_counts[2],
            n_reset: r.reset_count,
            n_fallback: r.fallback_events.len(),
        }
    }

    pub fn converged(&self) -> bool {
        self.status.starts_with("converged")
    }

    /// Key used to pair runs of two solvers.
    pub fn instance(&self) -> String {
        format!("{}/{}/{}", self.problem, self.start, self.noise)
    }
}

/// A record together with the parts of the report that do not fit a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    #[serde(flatten)]
    pub record: RunRecord,
    pub x_star: Vec<f64>,
    pub fallback_iterations: Vec<usize>,
    pub event_log: Vec<SolverEvent>,
}

pub const CSV_HEADER: &str =
    "problem,start,solver,noise,status,f_star,acc_inf,n_f,n_grad,iters,wall_s,n_sub0,n_sub1,n_sub2,n_reset,n_fallback";

const WALL_NOTE: &str = "wall_s is wall-clock seconds and replaces simulation time";

pub fn write_csv<W: std::io::Write>(records: &[RunRecord], out: W) -> Result<(), BenchError> {
    let mut out = out;
    writeln!(out, "# {WALL_NOTE}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<RunRecord>, BenchError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = rd.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(BenchError::Config(format!("unexpected columns: {header}")));
    }
    rd.deserialize().map(|r| r.map_err(BenchError::from)).collect()
}

#[derive(Serialize)]
struct Document<'a> {
    note: &'a str,
    runs: &'a [RunResult],
}

pub fn write_json<W: std::io::Write>(results: &[RunResult], out: W) -> Result<(), BenchError> {
    serde_json::to_writer_pretty(out, &Document { note: WALL_NOTE, runs: results })?;
    Ok(())
}

/// Writes `records.csv` and `records.json` into `dir`.
pub fn emit_reports(results: &[RunResult], dir: &Path) -> Result<(), BenchError> {
    if results.is_empty() {
        return Err(BenchError::Config("no records to emit".into()));
    }
    std::fs::create_dir_all(dir)?;
    let records: Vec<RunRecord> = results.iter().map(|r| r.record.clone()).collect();
    write_csv(&records, std::fs::File::create(dir.join("records.csv"))?)?;
    write_json(results, std::fs::File::create(dir.join("records.json"))?)?;
    Ok(())
}
