//! Scenario runner for `hjbv-core`: reads a JSON scenario, runs one pipeline,
//! writes a report, a timings file and plot-ready CSV tables.

pub mod pipelines;
pub mod report;
pub mod scenario;
pub mod tables;

pub use pipelines::{execute, run, Execution, RunOutcome};
pub use report::{Report, Witness};
pub use scenario::{Pipeline, Scenario};
pub use tables::{emit_plot_tables, Table};

use thiserror::Error;

/// Exit status when every asserted invariant holds.
pub const EXIT_PASS: u8 = 0;
/// Exit status when an invariant fails; the report is still written.
pub const EXIT_FAIL: u8 = 1;
/// Exit status for invalid scenarios, flags or inputs.
pub const EXIT_INVALID: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] hjbv_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Computation failures count as failed invariants, everything else as invalid input.
    pub fn exit_code(&self) -> u8 {
        use hjbv_core::Error as E;
        match self {
            Self::Core(E::Domain(_) | E::Infeasible(_) | E::Failure(_)) => EXIT_FAIL,
            _ => EXIT_INVALID,
        }
    }
}
