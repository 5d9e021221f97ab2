//! Command-line front end: fitting, simulation, summaries, synthetic data
//! and the reference simulator, with run manifests for reproducibility.

pub mod args;
pub mod commands;
pub mod manifest;
pub mod oracle;

use thiserror::Error;

pub use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("diagnostics failed: {0}")]
    Diagnostics(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Sampler(_) => 4,
            CliError::Diagnostics(_) => 5,
            CliError::Output(_) => 1,
        }
    }
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<manifest::RunManifest, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a pool built earlier in the process (e.g. by tests) stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Summarize(a) => commands::summarize(a),
        Command::Synth(a) => commands::synth(a),
        Command::Oracle(a) => commands::oracle(a),
    }
}
