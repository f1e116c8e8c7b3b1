//! Experiment harness around the `fixopt` library: seeded dataset generation,
//! optimization runs that write traces and summaries to disk, trace reports,
//! and an adjoint-versus-finite-difference gradient check.
//!
//! ## On-disk layout of a run
//!
//! Each run writes into its output directory:
//! - `trace.csv` — one row per outer iteration, schema
//!   `iter,c_n,inner_steps,grad_norm,param_norm,objective,contraction_bound`,
//!   with empty fields where the objective was not sampled or no bound
//!   function applies.
//! - `summary.txt` — `key: value` lines echoing the configuration and the
//!   end-of-run numbers (all recomputable from `trace.csv`).
//! - For the two model experiments, the dataset: `inputs.csv` and
//!   `targets.csv` (one header line, then one row per instance) and the
//!   square parameter matrices `w_true.csv` / `w0.csv` (no header, one row of
//!   comma-separated values per matrix row; the reaction-network matrices are
//!   the expanded symmetric forms).
//!
//! Identical configurations produce bitwise-identical dataset and trace
//! files; only the wall time in the summary varies.

pub mod experiment;
pub mod gradcheck;
pub mod report;

pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentKind, ExperimentMode, ExperimentSummary,
};
pub use gradcheck::gradcheck;
pub use report::{parse_trace, render_report, trace_stats, TraceStats};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Solver(#[from] fixopt::FixoptError),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
