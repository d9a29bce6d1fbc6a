//! Experiment runner for the `ustwind` crate: config parsing, seeded
//! execution, CSV/JSON artifacts and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{Effective, Experiment, ExperimentConfig, Format};
pub use error::{CliError, Result};
pub use output::{Manifest, Outcome};

use std::time::Instant;

/// Runs one experiment and writes its results file and manifest.
pub fn run(cfg: &Effective) -> Result<Manifest> {
    let start = Instant::now();
    let outcome = experiments::run(cfg)?;
    let manifest = output::write_artifacts(cfg, &outcome, start.elapsed().as_secs_f64())?;
    match outcome.failure {
        Some(msg) => Err(CliError::Failed(msg)),
        None => Ok(manifest),
    }
}
