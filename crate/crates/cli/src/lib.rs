//! Command-line harness for learnable Bregman splitting: experiment configs,
//! run manifests and the `complete`, `deblur`, `compare`, `train-denoiser`
//! and `selftest` commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod manifest;
pub mod run;
pub mod selftest;
pub mod train;

pub use config::{DenoiserKind, ExperimentConfig, SolverKind, Task};
pub use error::{CliError, CliResult};
pub use manifest::{RunManifest, SolverMetrics};

/// Environment variable capping internal parallelism.
pub const THREADS_ENV: &str = "LBS_THREADS";

/// Parses an `LBS_THREADS` value; unset means 1.
pub fn parse_thread_cap(value: Option<&str>) -> CliResult<usize> {
    match value {
        None => Ok(1),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
    }
}

/// The thread cap in effect. Every solver here is sequential, so the cap
/// only bounds future parallel kernels and is recorded in manifests.
pub fn thread_cap() -> usize {
    parse_thread_cap(std::env::var(THREADS_ENV).ok().as_deref()).unwrap_or(1)
}
