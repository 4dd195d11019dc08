//! Consolidated report for one run directory.
//!
//! Reads the run's artifacts and writes `report.json` plus three plot-ready
//! tables: retained counts per decoupling epoch, the imbalance ratio per
//! evaluated epoch, and a histogram of gradient angles. Output depends only
//! on the artifacts, so running it twice gives identical files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use remix_core::record::{read_angles_csv, AngleRow, EpochRow, FinalMetrics, ANGLES_CSV, PARTITIONS_CSV, RUN_CSV, RUN_JSON};
use remix_core::remix::read_partition_counts;
use remix_core::{FusionKind, Modality, RunRecord, RunStatus, Variant, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const REPORT_JSON: &str = "report.json";
pub const COUNTS_CSV: &str = "counts_per_epoch.csv";
pub const RHO_CSV: &str = "rho_per_epoch.csv";
pub const ANGLE_HISTOGRAM_CSV: &str = "angle_histogram.csv";
pub const ANGLE_BIN_DEG: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountsRow {
    pub schema_version: String,
    pub epoch: usize,
    pub retained_audio: usize,
    pub retained_video: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoRow {
    pub schema_version: String,
    pub epoch: usize,
    pub phase: String,
    pub rho: Option<f64>,
    pub val_acc_audio: f64,
    pub val_acc_video: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub schema_version: String,
    pub phase: String,
    pub modality: Modality,
    pub bin_lo_deg: f64,
    pub bin_hi_deg: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSummary {
    pub phase: String,
    pub modality: Modality,
    pub mean_deg: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub status: Option<RunStatus>,
    pub variant: Option<Variant>,
    pub fusion: Option<FusionKind>,
    pub seed: Option<u64>,
    pub final_test: Option<FinalMetrics>,
    pub first_remix_counts: Option<CountsRow>,
    pub last_rho: Option<f64>,
    pub angles: Vec<AngleSummary>,
    /// Figure tables written by this report.
    pub files: Vec<String>,
    /// Expected artifacts that were not found.
    pub missing: Vec<String>,
    pub notes: Vec<String>,
}

fn write_table<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(File::create(path)?));
    let ctx = || format!("writing {}", path.display());
    w.write_record(header).with_context(ctx)?;
    for r in rows {
        w.serialize(r).with_context(ctx)?;
    }
    w.flush()?;
    Ok(())
}

/// Bins of `ANGLE_BIN_DEG` covering [0, 180]; 180 falls in the last bin.
pub fn angle_histogram(angles: &[AngleRow], phase_of: &BTreeMap<usize, String>) -> Vec<HistogramRow> {
    let nbins = (180.0 / ANGLE_BIN_DEG).ceil() as usize;
    let mut counts: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
    for a in angles {
        let phase = phase_of.get(&a.epoch).cloned().unwrap_or_else(|| "unknown".into());
        let bins = counts.entry((phase, a.modality.index())).or_insert_with(|| vec![0; nbins]);
        if let Some(deg) = a.angle_deg {
            bins[((deg / ANGLE_BIN_DEG).floor().max(0.0) as usize).min(nbins - 1)] += 1;
        }
    }
    let mut rows = Vec::new();
    for ((phase, m), bins) in counts {
        for (i, count) in bins.into_iter().enumerate() {
            rows.push(HistogramRow {
                schema_version: SCHEMA_VERSION.into(),
                phase: phase.clone(),
                modality: Modality::from_index(m).expect("modality index"),
                bin_lo_deg: i as f64 * ANGLE_BIN_DEG,
                bin_hi_deg: ((i + 1) as f64 * ANGLE_BIN_DEG).min(180.0),
                count,
            });
        }
    }
    rows
}

fn angle_summaries(angles: &[AngleRow], phase_of: &BTreeMap<usize, String>) -> Vec<AngleSummary> {
    let mut acc: BTreeMap<(String, usize), (f64, usize, usize)> = BTreeMap::new();
    for a in angles {
        let phase = phase_of.get(&a.epoch).cloned().unwrap_or_else(|| "unknown".into());
        let e = acc.entry((phase, a.modality.index())).or_default();
        match a.angle_deg {
            Some(d) => {
                e.0 += d;
                e.1 += 1;
            }
            None => e.2 += 1,
        }
    }
    acc.into_iter()
        .map(|((phase, m), (sum, defined, undefined))| AngleSummary {
            phase,
            modality: Modality::from_index(m).expect("modality index"),
            mean_deg: (defined > 0).then(|| sum / defined as f64),
            defined,
            undefined,
        })
        .collect()
}

/// Writes the report files into `run_dir`. Missing artifacts are listed in
/// the report, which is still written, and then returned as
/// [`CliError::Partial`].
pub fn emit_report(run_dir: &Path) -> Result<Report, CliError> {
    if !run_dir.is_dir() {
        return Err(CliError::Config { field: "run_dir".into(), reason: format!("{} is not a directory", run_dir.display()) });
    }
    for f in [COUNTS_CSV, RHO_CSV, ANGLE_HISTOGRAM_CSV] {
        let _ = fs::remove_file(run_dir.join(f));
    }
    let mut report = Report {
        schema_version: SCHEMA_VERSION.into(),
        status: None,
        variant: None,
        fusion: None,
        seed: None,
        final_test: None,
        first_remix_counts: None,
        last_rho: None,
        angles: Vec::new(),
        files: Vec::new(),
        missing: Vec::new(),
        notes: Vec::new(),
    };

    let record = if run_dir.join(RUN_JSON).exists() {
        let r = RunRecord::load(run_dir)?;
        report.status = Some(r.status);
        report.variant = Some(r.config.variant);
        report.fusion = Some(r.config.fusion);
        report.seed = Some(r.config.seed);
        report.final_test = r.final_test.clone();
        if r.status != RunStatus::Complete {
            report.notes.push(format!("run status is {:?}; figures cover the recorded epochs only", r.status).to_lowercase());
        }
        Some(r)
    } else {
        report.missing.push(RUN_JSON.into());
        None
    };

    let rows: Option<Vec<EpochRow>> = if run_dir.join(RUN_CSV).exists() {
        Some(RunRecord::read_csv(File::open(run_dir.join(RUN_CSV))?)?)
    } else {
        report.missing.push(RUN_CSV.into());
        None
    };
    let phase_of: BTreeMap<usize, String> = rows.iter().flatten().map(|r| (r.epoch, r.phase.clone())).collect();

    if let Some(rows) = &rows {
        let rho: Vec<RhoRow> = rows
            .iter()
            .map(|r| RhoRow {
                schema_version: SCHEMA_VERSION.into(),
                epoch: r.epoch,
                phase: r.phase.clone(),
                rho: r.rho,
                val_acc_audio: r.val_acc_audio,
                val_acc_video: r.val_acc_video,
            })
            .collect();
        report.last_rho = rho.last().and_then(|r| r.rho);
        write_table(&run_dir.join(RHO_CSV), &["schema_version", "epoch", "phase", "rho", "val_acc_audio", "val_acc_video"], &rho)?;
        report.files.push(RHO_CSV.into());
    }

    if run_dir.join(PARTITIONS_CSV).exists() {
        let counts: Vec<CountsRow> = read_partition_counts(File::open(run_dir.join(PARTITIONS_CSV))?)?
            .into_iter()
            .map(|(epoch, c)| CountsRow { schema_version: SCHEMA_VERSION.into(), epoch, retained_audio: c[0], retained_video: c[1] })
            .collect();
        report.first_remix_counts = counts.first().cloned();
        write_table(&run_dir.join(COUNTS_CSV), &["schema_version", "epoch", "retained_audio", "retained_video"], &counts)?;
        report.files.push(COUNTS_CSV.into());
    } else {
        let cfg = record.as_ref().map(|r| &r.config);
        match cfg {
            Some(c) if c.variant == Variant::Baseline => {
                report.notes.push(format!("baseline run: no partitions, so {COUNTS_CSV} is not written"));
            }
            Some(c) if c.warmup_epochs >= c.total_epochs => {
                report.notes.push(format!("no remix epochs ran, so {COUNTS_CSV} is not written"));
            }
            _ => report.missing.push(PARTITIONS_CSV.into()),
        }
    }

    if run_dir.join(ANGLES_CSV).exists() {
        let angles = read_angles_csv(&run_dir.join(ANGLES_CSV))?;
        if angles.is_empty() {
            report.notes.push("no gradient-angle probes were recorded".into());
        }
        report.angles = angle_summaries(&angles, &phase_of);
        write_table(
            &run_dir.join(ANGLE_HISTOGRAM_CSV),
            &["schema_version", "phase", "modality", "bin_lo_deg", "bin_hi_deg", "count"],
            &angle_histogram(&angles, &phase_of),
        )?;
        report.files.push(ANGLE_HISTOGRAM_CSV.into());
    } else {
        report.missing.push(ANGLES_CSV.into());
    }

    let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    fs::write(run_dir.join(REPORT_JSON), text + "\n")?;
    if report.missing.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Partial {
            done: report.files.len(),
            total: report.files.len() + report.missing.len(),
            detail: format!("missing artifacts: {}", report.missing.join(", ")),
        })
    }
}
