//! Batch harness for the I-SQP and I-SLSQP solvers: run matrices, result
//! tables, paired Morales profiles and the corpus manifest.

pub mod config;
pub mod manifest;
pub mod matrix;
pub mod morales;
pub mod records;

pub use config::{BenchConfig, SolverKind};
pub use matrix::{jobs, run_job, run_matrix, Job};
pub use morales::{log_ratio, morales, MoralesEntry, MoralesProfile};
pub use records::{emit_reports, read_csv, write_csv, write_json, NoiseLabel, RunRecord, RunResult, CSV_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// Process exit code: 1 for bad input, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            _ => 2,
        }
    }
}
