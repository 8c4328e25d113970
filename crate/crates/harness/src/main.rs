use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fea_harness::{run_experiment, validate_config, ExperimentKind, RunError};

#[derive(Parser)]
#[command(
    name = "fea",
    version,
    about = "Run active inference experiments from JSON configs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// State estimation on a linear plant
    Estimate(RunArgs),
    /// Closed-loop active inference control
    Control(RunArgs),
    /// Expected-free-energy planning (T-maze or mountain car)
    Plan(RunArgs),
    /// Colored noise generation
    Noise(RunArgs),
    /// Estimator against a Kalman filter
    CompareKf(RunArgs),
    /// Controller against its PI limit
    ComparePid(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON config
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: config `output_dir`, then $FEA_OUT_DIR, then ./fea-out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this seed only, replacing the config's seed list
    #[arg(long)]
    seed: Option<u64>,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<PathBuf, RunError> {
    let raw = std::fs::read_to_string(&args.config)?;
    let mut value: serde_json::Value = serde_json::from_str(&raw)?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("experiment")
            .or_insert_with(|| kind.name().into());
        if let Some(seed) = args.seed {
            obj.insert("seeds".into(), vec![seed].into());
        }
    }
    let cfg = validate_config(&value.to_string()).map_err(RunError::Config)?;
    if cfg.experiment != kind {
        return Err(RunError::Setup(format!(
            "config is for `{}` but the `{}` subcommand was used",
            cfg.experiment.name(),
            kind.name()
        )));
    }
    let out = fea_harness::report::resolve_out_dir(args.out, &cfg);
    let report = run_experiment(&cfg, &out)?;
    for s in &report.seeds {
        let metrics: Vec<String> = s
            .metrics
            .iter()
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect();
        println!("seed {}: {} steps, {}", s.seed, s.steps, metrics.join(" "));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Estimate(a) => (ExperimentKind::Estimate, a),
        Command::Control(a) => (ExperimentKind::Control, a),
        Command::Plan(a) => (ExperimentKind::Plan, a),
        Command::Noise(a) => (ExperimentKind::Noise, a),
        Command::CompareKf(a) => (ExperimentKind::CompareKf, a),
        Command::ComparePid(a) => (ExperimentKind::ComparePid, a),
    };
    match run(kind, args) {
        Ok(out) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
