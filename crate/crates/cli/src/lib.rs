//! Experiment runner: JSON configurations in, CSV tables and a JSON report out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod presets;
pub mod sweep;
pub mod units;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::output::OutputDir;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub experiment: &'static str,
    pub version: &'static str,
    /// The configuration with every default filled in.
    pub config: &'a ExperimentConfig,
    pub wall_time_s: f64,
    pub results: serde_json::Value,
    pub files: Vec<PathBuf>,
}

/// Worker count from the environment or the machine.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Resolves `config` against the requested kind, applies the seed override,
/// runs the experiment into `out` (or the configured output directory) and
/// writes `report.json` last. Returns the output directory.
pub fn execute(
    config: ExperimentConfig,
    requested: Option<ExperimentKind>,
    out: Option<&Path>,
    workers: usize,
    seed: Option<u64>,
) -> Result<PathBuf, CliError> {
    let mut config = config.resolve(requested)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if workers == 0 {
        return Err(CliError::validation("workers", "must be at least 1"));
    }
    let kind = config.kind();
    let root = match (out, &config.output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => PathBuf::from("out").join(kind.name()),
    };
    config.output = Some(root.clone());
    let mut dir = OutputDir::create(&root)?;
    let start = Instant::now();
    let results = experiments::run_and_write(&config, workers, &mut dir)?;
    let report = Report {
        experiment: kind.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: &config,
        wall_time_s: start.elapsed().as_secs_f64(),
        results,
        files: dir.written().to_vec(),
    };
    dir.write_json(REPORT_FILE, &report)?;
    log::info!("{} finished in {:.2} s, output in {}", kind.name(), report.wall_time_s, root.display());
    Ok(root)
}
