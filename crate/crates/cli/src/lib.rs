//! Reproducible experiment runner for `sdlevy`.
//!
//! A run reads one JSON configuration, executes the named experiment and
//! writes `samples.csv`, `report.json`, `cdf.csv` and `ecf.csv`. Identical
//! configurations and seeds give byte-identical files at any thread count.

pub mod artifacts;
pub mod config;
pub mod experiments;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{run, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Reads and validates a configuration file, applying the command-line overrides.
pub fn load_config(path: &Path, seed: Option<u64>, out_dir: Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if out_dir.is_some() {
        cfg.out_dir = out_dir;
    }
    Ok(cfg)
}

/// Output directory of a run: the configured one, or `out/<experiment>`.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir
        .clone()
        .unwrap_or_else(|| Path::new("out").join(cfg.experiment.name()))
}

/// Runs `cfg` and writes its artifacts.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(Outcome, Vec<PathBuf>), CliError> {
    let outcome = run(cfg)?;
    let paths = artifacts::write_artifacts(&outcome, &output_dir(cfg))?;
    Ok((outcome, paths))
}
