//! Experiment runner: reads a JSON configuration, runs one experiment and
//! publishes its CSV tables and `summary.json`.

pub mod config;
mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;

/// Loads `config_path`, runs it and returns the output directory used.
pub fn run(config_path: &Path, output_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let out = config.resolve_output_dir(output_dir)?;
    experiments::run_experiment(&config, &out)?;
    Ok(out)
}
