use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isqp::problems::{corpus, finite_diff_check, manifest_entries, start_point};
use isqp_bench::manifest::render_manifest;
use isqp_bench::morales::write_profile;
use isqp_bench::{
    emit_reports, morales, read_csv, run_job, run_matrix, write_json, BenchConfig, BenchError, Job, NoiseLabel,
    RunRecord, SolverKind,
};

#[derive(Parser)]
#[command(name = "sqpbench", about = "Run and compare I-SQP / I-SLSQP on the test corpus")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one problem and print the report as JSON.
    Solve {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value = "islsqp")]
        solver: String,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "std")]
        start: String,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a TOML-described matrix and write records.csv / records.json.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Paired Morales profile of two records.csv files (a against b).
    /// `--b` defaults to `--a`, in which case both solver filters are needed.
    Profile {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: Option<PathBuf>,
        /// Keep only rows of this solver from `a`.
        #[arg(long)]
        solver_a: Option<String>,
        /// Keep only rows of this solver from `b`.
        #[arg(long)]
        solver_b: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print problem metadata and a finite-difference gradient check.
    Check {
        #[arg(long)]
        problem: String,
    },
    /// Print the corpus manifest as TOML.
    Manifest,
}

fn run(cmd: Cmd) -> Result<(), BenchError> {
    match cmd {
        Cmd::Solve { problem, solver, tol, noise, seed, start, out } => {
            if SolverKind::parse(&solver).is_none() {
                return Err(BenchError::Config(format!("unknown solver '{solver}'")));
            }
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(BenchError::Config(format!("bad noise magnitude {noise}")));
            }
            let mut base = isqp::driver::SolverConfig::default();
            if let Some(t) = tol {
                base.tol = t;
            }
            let label = if noise == 0.0 { NoiseLabel::none() } else { NoiseLabel { magnitude: noise, seed } };
            let job = Job { problem, start, solver, noise: label };
            let res = run_job(&job, &base)?;
            match out {
                Some(p) => write_json(std::slice::from_ref(&res), std::fs::File::create(p)?)?,
                None => write_json(std::slice::from_ref(&res), std::io::stdout().lock())?,
            }
            eprintln!(
                "{} {}: {} f={:.10e} acc_inf={:.2e} iters={}",
                res.record.problem, res.record.solver, res.record.status, res.record.f_star, res.record.acc_inf, res.record.iters
            );
        }
        Cmd::Bench { config, out_dir, parallel } => {
            let cfg = BenchConfig::load(&config)?;
            let results = run_matrix(&cfg, parallel)?;
            emit_reports(&results, &out_dir)?;
            let solved = results.iter().filter(|r| r.record.converged()).count();
            println!("{} runs, {} converged, written to {}", results.len(), solved, out_dir.display());
        }
        Cmd::Profile { a, b, solver_a, solver_b, out } => {
            if b.is_none() && (solver_a.is_none() || solver_b.is_none()) {
                return Err(BenchError::Config("a single file needs --solver-a and --solver-b".into()));
            }
            let load = |p: &PathBuf, solver: &Option<String>| -> Result<Vec<RunRecord>, BenchError> {
                let f = std::fs::File::open(p)
                    .map_err(|e| BenchError::Config(format!("cannot open {}: {e}", p.display())))?;
                let mut rows = read_csv(f)?;
                if let Some(s) = solver {
                    rows.retain(|r| &r.solver == s);
                }
                Ok(rows)
            };
            let ra = load(&a, &solver_a)?;
            let rb = load(b.as_ref().unwrap_or(&a), &solver_b)?;
            let prof = morales(&ra, &rb);
            match out {
                Some(p) => write_profile(&prof, std::fs::File::create(p)?)?,
                None => write_profile(&prof, std::io::stdout().lock())?,
            }
        }
        Cmd::Check { problem } => {
            let p = corpus(&problem).map_err(|e| BenchError::Config(e.to_string()))?;
            let x0 = start_point(&p, "std").map_err(|e| BenchError::Config(e.to_string()))?;
            let err = finite_diff_check(&p, &x0, 1e-6).map_err(|e| BenchError::Internal(e.to_string()))?;
            println!("{}: n={} m_eq={} m_ineq={}", p.name, p.n, p.m_eq, p.m_ineq);
            if let Some(c) = &p.classification {
                println!("classification: {c:?}");
            }
            if let Some(k) = &p.known_optimum {
                println!("known f*: {}", k.f);
            }
            println!("max normalized gradient error at start: {err:.3e}");
        }
        Cmd::Manifest => print!("{}", render_manifest(&manifest_entries())?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqpbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
