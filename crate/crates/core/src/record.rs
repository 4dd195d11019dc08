//! Per-run records and the files a run directory contains.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{check_schema_version, Modality, SynthSpec, SCHEMA_VERSION};
use crate::error::Result;
use crate::metrics::AngleProbe;
use crate::remix::{csv_err, write_partitions_csv};
use crate::train::{Evaluation, FailureContext, TrainConfig, TrainOutcome};

pub const RUN_CSV: &str = "run.csv";
pub const RUN_JSON: &str = "run.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const ANGLES_CSV: &str = "angles.csv";
pub const PARTITIONS_CSV: &str = "partitions.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Column order of `run.csv`.
pub const RUN_CSV_COLUMNS: [&str; 22] = [
    "schema_version",
    "epoch",
    "phase",
    "train_loss",
    "train_loss_fused",
    "train_loss_head_audio",
    "train_loss_head_video",
    "samples_seen",
    "num_batches",
    "masks_applied",
    "pure_batches",
    "retained_audio",
    "retained_video",
    "val_acc_multimodal",
    "val_acc_audio",
    "val_acc_video",
    "val_acc_audio_zero_mask",
    "val_acc_video_zero_mask",
    "rho",
    "mean_angle_audio",
    "mean_angle_video",
    "undefined_angles",
];

/// One evaluated epoch. Empty CSV cells stand for `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub schema_version: String,
    pub epoch: usize,
    /// `warmup` or the variant key.
    pub phase: String,
    pub train_loss: f64,
    pub train_loss_fused: f64,
    pub train_loss_head_audio: f64,
    pub train_loss_head_video: f64,
    pub samples_seen: usize,
    pub num_batches: usize,
    pub masks_applied: u8,
    pub pure_batches: u8,
    pub retained_audio: Option<usize>,
    pub retained_video: Option<usize>,
    pub val_acc_multimodal: f64,
    pub val_acc_audio: f64,
    pub val_acc_video: f64,
    pub val_acc_audio_zero_mask: f64,
    pub val_acc_video_zero_mask: f64,
    pub rho: Option<f64>,
    pub mean_angle_audio: Option<f64>,
    pub mean_angle_video: Option<f64>,
    pub undefined_angles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub acc_multimodal: f64,
    pub acc_audio: f64,
    pub acc_video: f64,
    pub acc_audio_zero_mask: f64,
    pub acc_video_zero_mask: f64,
    pub rho: Option<f64>,
}

impl From<&Evaluation> for FinalMetrics {
    fn from(e: &Evaluation) -> Self {
        FinalMetrics {
            acc_multimodal: e.acc_multimodal,
            acc_audio: e.acc_head[0],
            acc_video: e.acc_head[1],
            acc_audio_zero_mask: e.acc_zero_mask[0],
            acc_video_zero_mask: e.acc_zero_mask[1],
            rho: e.rho.rho,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: String,
    pub status: RunStatus,
    pub config: TrainConfig,
    pub synth: SynthSpec,
    pub rows: Vec<EpochRow>,
    pub final_test: Option<FinalMetrics>,
    /// Only in `run.json`; never part of the CSV, so reruns diff clean.
    pub wall_clock_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort: Option<AbortDiagnostics>,
}

impl RunRecord {
    pub fn new(config: TrainConfig, synth: SynthSpec) -> Self {
        RunRecord {
            schema_version: SCHEMA_VERSION.to_string(),
            status: RunStatus::Running,
            config,
            synth,
            rows: Vec::new(),
            final_test: None,
            wall_clock_secs: 0.0,
            abort: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: RunRecord = serde_json::from_str(s)?;
        check_schema_version(&r.schema_version)?;
        Ok(r)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(dir.join(RUN_JSON))?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.rows.is_empty() {
            w.write_record(RUN_CSV_COLUMNS).map_err(csv_err)?;
        }
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<EpochRow>> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for row in r.deserialize::<EpochRow>() {
            let row = row.map_err(csv_err)?;
            check_schema_version(&row.schema_version)?;
            rows.push(row);
        }
        Ok(rows)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbortDiagnostics {
    pub cause: String,
    pub context: FailureContext,
}

/// Carried by [`crate::Error::Aborted`].
#[derive(Clone, Debug)]
pub struct AbortReport {
    pub cause: String,
    pub context: FailureContext,
    pub partial: TrainOutcome,
}

/// Long-form metrics: `schema_version,epoch,split,mode,metric,value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub schema_version: String,
    pub epoch: usize,
    pub split: String,
    pub mode: String,
    pub metric: String,
    pub value: Option<f64>,
}

impl MetricRow {
    pub fn from_eval(epoch: usize, split: &str, e: &Evaluation) -> Vec<MetricRow> {
        let row = |mode: &str, metric: &str, value| MetricRow {
            schema_version: SCHEMA_VERSION.to_string(),
            epoch,
            split: split.to_string(),
            mode: mode.to_string(),
            metric: metric.to_string(),
            value,
        };
        let mut rows = vec![row("multimodal", "accuracy", Some(e.acc_multimodal))];
        for m in Modality::ALL {
            rows.push(row(&format!("{}_head", m.name()), "accuracy", Some(e.acc_head[m.index()])));
            rows.push(row(&format!("{}_zero_mask", m.name()), "accuracy", Some(e.acc_zero_mask[m.index()])));
        }
        let uni = e.rho.uni_mode.key();
        rows.push(row(uni, "rho", e.rho.rho));
        rows.push(row(uni, "mean_true_class_audio", Some(e.rho.mean_score_a)));
        rows.push(row(uni, "mean_true_class_video", Some(e.rho.mean_score_v)));
        rows
    }
}

/// One gradient-angle probe: `schema_version,epoch,batch_index,modality,angle_deg,defined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub schema_version: String,
    pub epoch: usize,
    pub batch_index: usize,
    pub modality: Modality,
    pub angle_deg: Option<f64>,
    pub defined: u8,
}

impl AngleRow {
    pub fn new(epoch: usize, batch_index: usize, p: &AngleProbe) -> Self {
        AngleRow {
            schema_version: SCHEMA_VERSION.to_string(),
            epoch,
            batch_index,
            modality: p.modality,
            angle_deg: p.angle_deg,
            defined: u8::from(p.defined()),
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_angles_csv(path: &Path) -> Result<Vec<AngleRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let rows: Vec<AngleRow> = r.deserialize().map(|row| row.map_err(csv_err)).collect::<Result<_>>()?;
    for row in &rows {
        check_schema_version(&row.schema_version)?;
    }
    Ok(rows)
}

/// Writes every artifact of a run (complete or aborted) into `dir`.
///
/// `partitions.csv` is written only when decoupling ran at least once.
pub fn write_run_dir(dir: &Path, out: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    out.record.write_csv(BufWriter::new(File::create(dir.join(RUN_CSV))?))?;
    write_rows(&dir.join(METRICS_CSV), &["schema_version", "epoch", "split", "mode", "metric", "value"], &out.metrics)?;
    write_rows(&dir.join(ANGLES_CSV), &["schema_version", "epoch", "batch_index", "modality", "angle_deg", "defined"], &out.angles)?;
    if !out.partitions.is_empty() {
        write_partitions_csv(&out.partitions, BufWriter::new(File::create(dir.join(PARTITIONS_CSV))?))?;
    }
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt_dir)?;
    for c in &out.checkpoints {
        c.save(&ckpt_dir.join(format!("epoch_{:04}.json", c.epoch)))?;
    }
    out.final_checkpoint().save(&ckpt_dir.join("final.json"))?;
    // run.json last: its presence with status=complete marks a finished run.
    let mut w = BufWriter::new(File::create(dir.join(RUN_JSON))?);
    serde_json::to_writer_pretty(&mut w, &out.record)?;
    w.flush()?;
    Ok(())
}
