//! Trace files and the JSON run report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::RunError;
use crate::experiments::{run_seed, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub trace_file: String,
    pub steps: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub wall_clock_seconds: f64,
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_{seed}.csv")
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&trace.header)?;
    for row in &trace.rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Output directory: `--out`, then the config, then `FEA_OUT_DIR`, then
/// `./fea-out`.
pub fn resolve_out_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("FEA_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fea-out"))
}

/// Validates, runs every seed, writes `trace_<seed>.csv` files and
/// `report.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let setup = cfg.setup().map_err(RunError::Config)?;
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut seeds = Vec::with_capacity(setup.seeds.len());
    for &seed in &setup.seeds {
        let run = run_seed(&setup, seed)?;
        let name = trace_file_name(seed);
        write_trace(&out_dir.join(&name), &run.trace)?;
        seeds.push(SeedReport {
            seed,
            trace_file: name,
            steps: run.trace.rows.len(),
            metrics: run.metrics,
        });
    }
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment,
        config: cfg.clone(),
        seeds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}
