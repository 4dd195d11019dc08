//! One training run and its artifact directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use remix_core::record::{RunRecord, RUN_JSON};
use remix_core::{generate_dataset, run_training, split_dataset, write_run_dir, Error, FusionKind, RunStatus, SynthSpec, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::{CliError, ExperimentConfig};

/// Written before training starts; a finished run is reused only when this
/// matches exactly.
pub const EXPERIMENT_JSON: &str = "experiment.json";
pub const ERROR_JSON: &str = "error.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunJob {
    pub name: String,
    #[serde(skip)]
    pub dir: PathBuf,
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub train_frac: f64,
    pub val_frac: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub job: RunJob,
    /// True when an existing complete run was picked up instead of retrained.
    pub resumed: bool,
    pub record: RunRecord,
}

impl RunSummary {
    /// Final multimodal test accuracy in percent.
    pub fn test_acc_pct(&self) -> Option<f64> {
        self.record.final_test.as_ref().map(|m| 100.0 * m.acc_multimodal)
    }
}

/// `{fusion}-{variant}-seed{seed}`.
pub fn run_name(fusion: FusionKind, variant: Variant, seed: u64) -> String {
    format!("{}-{}-seed{seed}", fusion.key(), variant.key())
}

impl RunJob {
    pub fn new(cfg: &ExperimentConfig, root: &Path, seed: u64, variant: Option<Variant>, fusion: Option<FusionKind>) -> Self {
        let (synth, mut train) = cfg.for_run(seed);
        if let Some(v) = variant {
            train.variant = v;
        }
        if let Some(f) = fusion {
            train.fusion = f;
        }
        let name = run_name(train.fusion, train.variant, seed);
        RunJob { dir: root.join(&name), name, synth, train, train_frac: cfg.train_frac, val_frac: cfg.val_frac }
    }

    fn spec_json(&self) -> serde_json::Value {
        serde_json::json!({ "schema_version": remix_core::SCHEMA_VERSION, "job": self })
    }

    /// The stored record, if this exact job already finished in `dir`.
    pub fn completed_record(&self) -> Option<RunRecord> {
        let spec: serde_json::Value = serde_json::from_str(&fs::read_to_string(self.dir.join(EXPERIMENT_JSON)).ok()?).ok()?;
        if spec != self.spec_json() {
            return None;
        }
        let record = RunRecord::load(&self.dir).ok()?;
        (record.status == RunStatus::Complete).then_some(record)
    }
}

/// Runs `job` unless it already completed, writing every artifact into
/// `job.dir`. An abort still writes the partial run plus `error.json`.
pub fn execute_run(job: &RunJob) -> Result<RunSummary, CliError> {
    if let Some(record) = job.completed_record() {
        info!("{}: complete, skipping", job.name);
        return Ok(RunSummary { job: job.clone(), resumed: true, record });
    }
    job.train.validate()?;
    let dataset = generate_dataset(&job.synth)?;
    let splits = split_dataset(&dataset, job.train_frac, job.val_frac, job.synth.seed)?;

    fs::create_dir_all(&job.dir).with_context(|| format!("creating {}", job.dir.display()))?;
    // A stale run.json must not mark this attempt complete if it dies midway.
    let _ = fs::remove_file(job.dir.join(RUN_JSON));
    let _ = fs::remove_file(job.dir.join(ERROR_JSON));
    fs::write(job.dir.join(EXPERIMENT_JSON), serde_json::to_string_pretty(&job.spec_json()).map_err(anyhow::Error::from)?)?;

    info!("{}: training {} epochs", job.name, job.train.total_epochs);
    match run_training(&job.train, &splits) {
        Ok(out) => {
            write_run_dir(&job.dir, &out)?;
            Ok(RunSummary { job: job.clone(), resumed: false, record: out.record })
        }
        Err(Error::Aborted(report)) => {
            write_run_dir(&job.dir, &report.partial)?;
            let err = CliError::Aborted { run_dir: job.dir.clone(), epoch: report.context.epoch, cause: report.cause.clone() };
            let mut body = err.to_json();
            body["context"] = serde_json::to_value(&report.context).map_err(anyhow::Error::from)?;
            fs::write(job.dir.join(ERROR_JSON), serde_json::to_string_pretty(&body).map_err(anyhow::Error::from)?)?;
            Err(err)
        }
        Err(e) => Err(e.into()),
    }
}
