use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use remix_cli::config::OUT_ENV;
use remix_cli::run::RunJob;
use remix_cli::{emit_report, execute_run, run_ablation_suite, run_fusion_sweep, CliError, ExperimentConfig, Overrides, SuiteKind};
use serde_json::json;

#[derive(Parser)]
#[command(name = "remix", version, about = "Train and compare multimodal remixing runs on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run (the first seed of the config).
    Run(ConfigArgs),
    /// Every variant under every seed; writes ablation.csv.
    Ablation(ConfigArgs),
    /// {concat, sum, decision} x {baseline, full_remix}; writes fusion.csv.
    FusionSweep(ConfigArgs),
    /// Consolidated report and figure tables for one run directory.
    Report { run_dir: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat JSON config; needs at least total_epochs and warmup_epochs.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root (falls back to the env var, then the config, then ./runs).
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    order_policy: Option<String>,
    #[arg(long)]
    uni_mode: Option<String>,
}

impl ConfigArgs {
    fn load(&self, suite: SuiteKind) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            variant: self.variant.clone(),
            order_policy: self.order_policy.clone(),
            uni_mode: self.uni_mode.clone(),
        })?;
        cfg.suite = suite;
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> Result<serde_json::Value, CliError> {
    match command {
        Command::Run(args) => {
            let cfg = args.load(SuiteKind::Single)?;
            cfg.ensure_out_writable()?;
            let job = RunJob::new(&cfg, &cfg.out, cfg.seeds[0], None, None);
            let s = execute_run(&job)?;
            Ok(json!({
                "status": "complete",
                "run_dir": s.job.dir,
                "resumed": s.resumed,
                "test_acc_pct": s.test_acc_pct(),
            }))
        }
        Command::Ablation(args) => {
            if args.variant.is_some() {
                log::warn!("--variant is ignored by the ablation suite");
            }
            let s = run_ablation_suite(&args.load(SuiteKind::Ablation)?)?;
            Ok(json!({ "status": "complete", "dir": s.dir, "runs": s.cells.len(), "flags": s.flags }))
        }
        Command::FusionSweep(args) => {
            let s = run_fusion_sweep(&args.load(SuiteKind::FusionSweep)?)?;
            Ok(json!({ "status": "complete", "dir": s.dir, "runs": s.cells.len(), "flags": s.flags }))
        }
        Command::Report { run_dir } => {
            let r = emit_report(&run_dir)?;
            Ok(json!({ "status": "complete", "files": r.files, "notes": r.notes }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(mut body) => {
            body["schema_version"] = json!(remix_core::SCHEMA_VERSION);
            println!("{body}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            println!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
