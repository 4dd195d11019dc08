//! Library side of the `remix` binary: config parsing, single runs, suites
//! and reports. `main.rs` only parses arguments and maps errors to exit codes.

pub mod config;
pub mod report;
pub mod run;
pub mod suite;

use std::fmt;
use std::path::PathBuf;

use serde_json::json;

pub use config::{ExperimentConfig, Overrides, SuiteKind};
pub use report::{emit_report, Report};
pub use run::{execute_run, RunJob, RunSummary};
pub use suite::{run_ablation_suite, run_fusion_sweep, SuiteSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad config or input; names the offending field.
    Config {
        field: String,
        reason: String,
    },
    /// A run stopped early. Its partial artifacts are in `run_dir`.
    Aborted {
        run_dir: PathBuf,
        epoch: usize,
        cause: String,
    },
    /// Some runs of a suite (or artifacts of a report) are missing.
    Partial {
        done: usize,
        total: usize,
        detail: String,
    },
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Aborted { .. } | CliError::Runtime(_) => EXIT_ABORT,
            CliError::Partial { .. } => EXIT_PARTIAL,
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let schema = remix_core::SCHEMA_VERSION;
        let code = self.exit_code();
        match self {
            CliError::Config { field, reason } => json!({
                "schema_version": schema, "status": "error", "kind": "config",
                "exit_code": code, "field": field, "message": reason,
            }),
            CliError::Aborted { run_dir, epoch, cause } => json!({
                "schema_version": schema, "status": "error", "kind": "runtime_abort",
                "exit_code": code, "run_dir": run_dir, "epoch": epoch, "message": cause,
            }),
            CliError::Partial { done, total, detail } => json!({
                "schema_version": schema, "status": "error", "kind": "partial",
                "exit_code": code, "completed": done, "total": total, "message": detail,
            }),
            CliError::Runtime(e) => json!({
                "schema_version": schema, "status": "error", "kind": "runtime",
                "exit_code": code, "message": format!("{e:#}"),
            }),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { field, reason } => write!(f, "config error in `{field}`: {reason}"),
            CliError::Aborted { run_dir, epoch, cause } => {
                write!(f, "run aborted at epoch {epoch}: {cause} (partial artifacts in {})", run_dir.display())
            }
            CliError::Partial { done, total, detail } => write!(f, "{done}/{total} complete: {detail}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<remix_core::Error> for CliError {
    fn from(e: remix_core::Error) -> Self {
        match e {
            remix_core::Error::Validation { field, reason } => CliError::Config { field, reason },
            remix_core::Error::Schema { .. } => CliError::Config { field: "schema_version".into(), reason: e.to_string() },
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let cfg = CliError::Config { field: "lr".into(), reason: "x".into() };
        assert_eq!(cfg.exit_code(), 2);
        assert_eq!(cfg.to_json()["field"], "lr");
        let abort = CliError::Aborted { run_dir: "r".into(), epoch: 3, cause: "nan".into() };
        assert_eq!(abort.exit_code(), 3);
        assert_eq!(CliError::Partial { done: 1, total: 2, detail: String::new() }.exit_code(), 4);
        let core: CliError = remix_core::Error::validation("batch_size", "zero").into();
        assert!(matches!(core, CliError::Config { ref field, .. } if field == "batch_size"));
    }
}
