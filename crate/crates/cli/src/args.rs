//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aggrex", version, about = "Aggregated chemical exposure: fit source models, simulate pseudo-populations, summarise")]
pub struct Cli {
    /// Worker threads for sampler chains and simulation (default: all cores)
    #[arg(long, global = true, env = "AGGREX_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit every source model to a dataset and write posterior draws
    Fit(FitArgs),
    /// Simulate pseudo-populations from posterior draws under a scenario
    Simulate(SimulateArgs),
    /// Summarise an exposure sample file into percentile, stratum, contribution and ECDF tables
    #[command(after_help = SUMMARY_SCHEMAS)]
    Summarize(SummarizeArgs),
    /// Generate a synthetic dataset with known true parameters
    Synth(SynthArgs),
    /// Reference Monte Carlo of exposure percentiles under the true parameters of a synthetic dataset
    Oracle(OracleArgs),
}

pub const SUMMARY_SCHEMAS: &str = "\
Outputs (values with 6 significant digits):
  summaries.csv      probe,posterior_median,ci_low,ci_high,ci_level
  stratum_table.csv  age_group,gender,source,probe,posterior_median,ci_low,ci_high,ci_level
                     (\"all\" marks a dimension the row does not split on; the all/all rows are the overall population)
  contributions.csv  source,share_median,ci_low,ci_high,ci_level
  ecdf.csv           exposure,cdf_median,ci_low,ci_high,ci_level";

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory (strata.csv, survey.csv, ...)
    #[arg(long)]
    pub data: PathBuf,
    /// TOML file with [model] and [sampler] tables; defaults apply when omitted
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Number of chains (overrides the config file)
    #[arg(long)]
    pub chains: Option<usize>,
    /// Warmup iterations per chain (overrides the config file)
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Retained draws per chain (overrides the config file)
    #[arg(long)]
    pub samples: Option<usize>,
    /// Master random seed (overrides the config file)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for draw files, diagnostics and the manifest
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory of posterior draws written by `fit` (or `synth` under truth_draws/)
    #[arg(long)]
    pub draws: PathBuf,
    /// Scenario TOML file; the pre-ban defaults apply when omitted
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Master random seed (overrides the scenario file)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pseudo-population size (overrides the scenario file)
    #[arg(long)]
    pub population: Option<u64>,
    /// Dataset directory (overrides the scenario file and the fit record)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for exposure_samples.csv and the manifest
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Exposure sample file written by `simulate`
    #[arg(long)]
    pub samples: PathBuf,
    /// Comma-separated percentile probes in (0, 1)
    #[arg(long, default_value = "0.05,0.5,0.95")]
    pub probes: String,
    /// Credible level of the intervals
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,
    /// Comma-separated grouping of the stratum table: age_group, gender, or empty for the overall row only
    #[arg(long, default_value = "age_group,gender")]
    pub group_by: String,
    /// Summarise all iterations pooled instead of per iteration (comparison only)
    #[arg(long)]
    pub pooled: bool,
    /// Number of ECDF grid points
    #[arg(long, default_value_t = 200)]
    pub grid_points: usize,
    /// Directory for the summary tables and the manifest
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator TOML file with sizes and true parameter values; defaults apply when omitted
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Random seed of the generator
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory for the dataset, truth.json and truth_draws/
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// truth.json written by `synth`
    #[arg(long)]
    pub truth: PathBuf,
    /// Scenario TOML file; the pre-ban defaults apply when omitted
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Random seed of the reference simulation
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV of percentiles with Monte Carlo standard errors
    #[arg(long)]
    pub out: PathBuf,
}
