use std::time::Instant;

use isqp::driver::{solve_islsqp, solve_isqp, SolverConfig};
use isqp::problems::{corpus, start_point, with_noise, NoiseSpec, NoiseTargets};
use rayon::prelude::*;

use crate::config::{BenchConfig, SolverKind};
use crate::records::{NoiseLabel, RunRecord, RunResult};
use crate::BenchError;

/// One cell of the run matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub problem: String,
    pub start: String,
    pub solver: String,
    pub noise: NoiseLabel,
}

/// Expands the matrix in a fixed order: problem, start, noise, solver.
pub fn jobs(cfg: &BenchConfig) -> Vec<Job> {
    let mut noises = Vec::new();
    for &m in &cfg.noise.magnitudes {
        if m == 0.0 {
            noises.push(NoiseLabel::none());
        } else {
            noises.extend(cfg.noise.seeds.iter().map(|&seed| NoiseLabel { magnitude: m, seed }));
        }
    }
    let mut out = Vec::new();
    for p in &cfg.problems.ids {
        for s in &cfg.starts.ids {
            for n in &noises {
                for solver in &cfg.solvers.names {
                    out.push(Job {
                        problem: p.clone(),
                        start: s.clone(),
                        solver: solver.clone(),
                        noise: *n,
                    });
                }
            }
        }
    }
    out
}

/// Runs one job on a freshly built problem instance.
pub fn run_job(job: &Job, base: &SolverConfig) -> Result<RunResult, BenchError> {
    let kind = SolverKind::parse(&job.solver).ok_or_else(|| BenchError::Config(format!("unknown solver '{}'", job.solver)))?;
    let clean = corpus(&job.problem).map_err(|e| BenchError::Config(e.to_string()))?;
    let p = with_noise(
        &clean,
        NoiseSpec {
            magnitude: job.noise.magnitude,
            seed: job.noise.seed,
            targets: NoiseTargets::default(),
        },
    );
    let x0 = start_point(&p, &job.start).map_err(|e| BenchError::Config(e.to_string()))?;
    let mut cfg = kind.configure(base.clone());
    if job.noise.magnitude > 0.0 {
        cfg.noise_seed = Some(job.noise.seed);
    }
    let t0 = Instant::now();
    let report = if kind.uses_lsq() {
        solve_islsqp(&p, &x0, &cfg)
    } else {
        solve_isqp(&p, &x0, &cfg)
    };
    let wall = t0.elapsed().as_secs_f64();
    Ok(RunResult {
        record: RunRecord::from_report(&job.problem, &job.start, &job.solver, job.noise, &report, wall),
        x_star: report.x_star.clone(),
        fallback_iterations: report.fallback_events.clone(),
        event_log: report.event_log,
    })
}

/// Executes every combination in `cfg`, with up to `parallel` worker
/// threads. Results come back in [`jobs`] order either way.
pub fn run_matrix(cfg: &BenchConfig, parallel: usize) -> Result<Vec<RunResult>, BenchError> {
    cfg.validate()?;
    let base = cfg.solver_config();
    let jobs = jobs(cfg);
    if parallel <= 1 {
        return jobs.iter().map(|j| run_job(j, &base)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| BenchError::Internal(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(|j| run_job(j, &base)).collect())
}
