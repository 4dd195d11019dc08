use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "total_epochs": 4,
  "warmup_epochs": 2,
  "samples_per_class": 20,
  "hidden_dim": 8,
  "feature_dim": 4,
  "batch_size": 16,
  "seeds": [0]
}"#;

fn remix(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_remix"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("REMIX_OUT");
    if let Some(dir) = out_env {
        cmd.env("REMIX_OUT", dir);
    }
    cmd.output().expect("spawn remix")
}

fn stdout_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|e| panic!("bad stdout {text:?}: {e}"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn with_fields(extra: &str) -> String {
    TINY.replacen('{', &format!("{{ {extra},"), 1)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_required_field_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"total_epochs": 4}"#);
    let o = remix(&["run", path_str(&cfg), "--out", path_str(tmp.path())], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stdout_json(&o);
    assert_eq!(err["kind"], "config");
    assert_eq!(err["field"], "warmup_epochs");
}

#[test]
fn unknown_field_and_bad_override_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &with_fields(r#""warm_up": 3"#));
    let o = remix(&["run", path_str(&cfg), "--out", path_str(tmp.path())], None);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["field"], "warm_up");

    let cfg = write_config(tmp.path(), TINY);
    let o = remix(&["run", path_str(&cfg), "--out", path_str(tmp.path()), "--uni-mode", "softmax"], None);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["field"], "uni_mode");
}

#[test]
fn run_writes_documented_artifacts_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = remix(&["run", path_str(&cfg), "--out", path_str(out)], None);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout_json(&o)["resumed"], false);
    }
    let dir = a.join("concat-full_remix-seed0");
    for f in ["run.csv", "run.json", "metrics.csv", "angles.csv", "partitions.csv", "experiment.json", "checkpoints/final.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let csv_a = fs::read_to_string(dir.join("run.csv")).unwrap();
    assert_eq!(csv_a.lines().next().unwrap(), remix_core::RUN_CSV_COLUMNS.join(","));
    assert_eq!(csv_a.lines().count(), 5);
    assert_eq!(csv_a, fs::read_to_string(b.join("concat-full_remix-seed0/run.csv")).unwrap());

    // Same config into the same directory is picked up, not retrained.
    let o = remix(&["run", path_str(&cfg), "--out", path_str(&a)], None);
    assert_eq!(stdout_json(&o)["resumed"], true);
    // A changed config is retrained.
    let o = remix(&["run", path_str(&cfg), "--out", path_str(&a), "--order-policy", "interleaved"], None);
    assert_eq!(stdout_json(&o)["resumed"], false);
}

#[test]
fn output_root_from_env_and_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let env_out = tmp.path().join("from_env");
    let o = remix(&["run", path_str(&cfg), "--seed", "3", "--variant", "baseline"], Some(&env_out));
    assert_eq!(o.status.code(), Some(0));
    assert!(env_out.join("concat-baseline-seed3/run.csv").exists());
    let flag_out = tmp.path().join("from_flag");
    let o = remix(&["run", path_str(&cfg), "--out", path_str(&flag_out)], Some(&env_out));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_out.join("concat-full_remix-seed0/run.csv").exists());
}

#[test]
fn divergence_exits_3_and_keeps_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &with_fields(r#""lr": 1e200"#));
    let o = remix(&["run", path_str(&cfg), "--out", path_str(tmp.path())], None);
    assert_eq!(o.status.code(), Some(3));
    let err = stdout_json(&o);
    assert_eq!(err["kind"], "runtime_abort");
    let dir = tmp.path().join("concat-full_remix-seed0");
    let record: Value = serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["status"], "aborted");
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.join("error.json")).unwrap()).unwrap();
    assert!(!saved["context"]["batch_ids"].as_array().unwrap().is_empty());
}

#[test]
fn ablation_suite_accounting_and_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace(r#""seeds": [0]"#, r#""seeds": [0, 1]"#));
    let out = tmp.path().join("out");
    let o = remix(&["ablation", path_str(&cfg), "--out", path_str(&out)], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["runs"], 8);
    let suite = out.join("ablation");
    let run_dirs = fs::read_dir(&suite).unwrap().filter(|e| e.as_ref().unwrap().path().join("run.json").exists()).count();
    assert_eq!(run_dirs, 8);

    let mut r = csv::Reader::from_path(suite.join("ablation.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let means: Vec<f64> = rows.iter().map(|x| x[col("mean_test_acc_pct")].parse().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] >= w[1]), "sorted by mean: {means:?}");
    let base = rows.iter().find(|x| &x[col("variant")] == "baseline").unwrap();
    assert_eq!(base[col("delta_vs_baseline_pct")].parse::<f64>().unwrap(), 0.0);

    // The baseline cell equals a single baseline run with the same seed.
    let single = tmp.path().join("single");
    let o = remix(&["run", path_str(&cfg), "--out", path_str(&single), "--variant", "baseline", "--seed", "1"], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(single.join("concat-baseline-seed1/run.csv")).unwrap(), fs::read(suite.join("concat-baseline-seed1/run.csv")).unwrap());

    // Resumable: only the removed run is retrained.
    fs::remove_dir_all(suite.join("concat-decouple_only-seed0")).unwrap();
    let o = remix(&["ablation", path_str(&cfg), "--out", path_str(&out)], None);
    assert_eq!(o.status.code(), Some(0));
    let cells = fs::read_to_string(suite.join("runs.csv")).unwrap();
    assert_eq!(cells.matches(",resumed,").count(), 7);
    assert_eq!(cells.matches(",complete,").count(), 1);
}

#[test]
fn failed_cells_make_a_partial_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &with_fields(r#""lr": 1e200"#));
    let o = remix(&["ablation", path_str(&cfg), "--out", path_str(tmp.path())], None);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stdout_json(&o)["kind"], "partial");
    let cells = fs::read_to_string(tmp.path().join("ablation/runs.csv")).unwrap();
    assert_eq!(cells.matches(",failed,").count(), 4);
    assert!(tmp.path().join("ablation/ablation.csv").exists());
}

#[test]
fn fusion_sweep_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let o = remix(&["fusion-sweep", path_str(&cfg), "--out", path_str(tmp.path())], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["runs"], 6);
    let mut r = csv::Reader::from_path(tmp.path().join("fusion_sweep/fusion.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[0][col("source")], "paper, not reproduced at desk scale");
    assert_eq!(&rows[0][col("baseline_mean_pct")], "64.52");
    assert_eq!(&rows[0][col("remix_mean_pct")], "72.72");
    for row in &rows[1..] {
        let f = |c: &str| row[col(c)].parse::<f64>().unwrap();
        assert!((f("delta_pct") - (f("remix_mean_pct") - f("baseline_mean_pct"))).abs() < 1e-9);
    }
}

#[test]
fn report_figures_baseline_note_and_idempotence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    remix(&["run", path_str(&cfg), "--out", path_str(tmp.path())], None);
    remix(&["run", path_str(&cfg), "--out", path_str(tmp.path()), "--variant", "baseline"], None);

    let full = tmp.path().join("concat-full_remix-seed0");
    let o = remix(&["report", path_str(&full)], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let files = ["report.json", "counts_per_epoch.csv", "rho_per_epoch.csv", "angle_histogram.csv"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(full.join(f)).unwrap()).collect();
    remix(&["report", path_str(&full)], None);
    let second: Vec<Vec<u8>> = files.iter().map(|f| fs::read(full.join(f)).unwrap()).collect();
    assert_eq!(first, second);
    let counts = fs::read_to_string(full.join("counts_per_epoch.csv")).unwrap();
    assert_eq!(counts.lines().count(), 3, "two remix epochs: {counts}");

    let base = tmp.path().join("concat-baseline-seed0");
    let o = remix(&["report", path_str(&base)], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(!base.join("counts_per_epoch.csv").exists());
    let report: Value = serde_json::from_str(&fs::read_to_string(base.join("report.json")).unwrap()).unwrap();
    assert!(report["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("baseline run")));
    assert!(report["missing"].as_array().unwrap().is_empty());
}

#[test]
fn report_lists_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    remix(&["run", path_str(&cfg), "--out", path_str(tmp.path())], None);
    let dir = tmp.path().join("concat-full_remix-seed0");
    fs::remove_file(dir.join("angles.csv")).unwrap();
    let o = remix(&["report", path_str(&dir)], None);
    assert_eq!(o.status.code(), Some(4));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["missing"], serde_json::json!(["angles.csv"]));
    assert!(dir.join("rho_per_epoch.csv").exists());

    let o = remix(&["report", path_str(&tmp.path().join("nope"))], None);
    assert_eq!(o.status.code(), Some(2));
}
