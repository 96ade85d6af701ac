//! Library side of the `mmlab` command: configuration, execution and report
//! writing, kept separate from argument parsing so tests can drive it
//! directly.

pub mod config;
pub mod output;
pub mod run;

use std::path::Path;

pub use config::ExperimentConfig;
pub use run::{CliError, ExperimentOutcome};

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses, validates, runs and writes reports; returns the outcome so the
/// caller can render it. Expectation failures are *not* returned here — the
/// reports are written either way and the caller decides the exit status via
/// [`ExperimentOutcome::expectation_failure`].
pub fn run_to_dir(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome, CliError> {
    let outcome = run::run_experiment(cfg)?;
    output::write_outputs(out_dir, &outcome)?;
    Ok(outcome)
}
