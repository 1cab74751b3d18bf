//! Flag parsing and config-file merging.
//!
//! Every flag can also come from a JSON config file (`--config`); explicit
//! flags win. The default output directory is `$AGGNASH_OUT`, falling back
//! to the current directory.

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};
use serde::Deserialize;

use aggnash_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "aggnash",
    version,
    about = "Approximate Nash equilibria of nonconvex sum-aggregative games"
)]
pub struct Cli {
    /// JSON config file providing defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $AGGNASH_OUT or the working directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Increase log verbosity (-v, -vv).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a charging-benchmark instance and write its game JSON.
    Gen {
        /// Player count.
        #[arg(long)]
        n: Option<usize>,
        /// Benchmark parameter JSON overriding the built-in defaults.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run the gradient-proximal solver on a game JSON.
    Solve {
        /// Game JSON produced by `gen` (or written by hand).
        #[arg(long)]
        game: Option<PathBuf>,
        /// Maximum sweeps.
        #[arg(long, alias = "K")]
        k: Option<usize>,
        /// Early-stop threshold on the sweep step norm.
        #[arg(long)]
        step_tol: Option<f64>,
        /// Optimality gap required of each proximal subproblem.
        #[arg(long)]
        inner_tol: Option<f64>,
        /// Initialization: anchor | uniform-vertex | provided.
        #[arg(long)]
        init: Option<String>,
        /// Profile JSON used with `--init provided`.
        #[arg(long)]
        init_profile: Option<PathBuf>,
    },
    /// Recover a feasible profile from a solve report.
    Disaggregate {
        #[arg(long)]
        game: Option<PathBuf>,
        /// Solve-report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// sf (deterministic) | randomized.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Measure equilibrium quality of a profile by exhaustive best response.
    Verify {
        #[arg(long)]
        game: Option<PathBuf>,
        /// Profile JSON; also accepts a disaggregation or solve report.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Solve-report JSON used to attach the theory bound.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the benchmark over grids of player counts and sweeps.
    Bench {
        /// Comma-separated player counts, e.g. 64,256,1024.
        #[arg(long)]
        n_grid: Option<String>,
        /// Instances per player count.
        #[arg(long)]
        instances: Option<usize>,
        /// Sweeps per run.
        #[arg(long, alias = "K")]
        k: Option<usize>,
        /// Parallel instance jobs.
        #[arg(long)]
        jobs: Option<usize>,
        /// Use the full published grid (n up to 2^15, 50 instances).
        #[arg(long, action = ArgAction::SetTrue)]
        full_scale: bool,
        /// Benchmark parameter JSON overriding the built-in defaults.
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

/// Optional defaults loaded from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub params: Option<PathBuf>,
    pub game: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub k: Option<usize>,
    pub step_tol: Option<f64>,
    pub inner_tol: Option<f64>,
    pub init: Option<String>,
    pub init_profile: Option<PathBuf>,
    pub mode: Option<String>,
    pub n_grid: Option<Vec<usize>>,
    pub instances: Option<usize>,
    pub jobs: Option<usize>,
    pub full_scale: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<FileConfig> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

/// Comma-separated list of player counts.
pub fn parse_n_grid(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::Invalid(format!("bad player count {part:?} in --n-grid")))
        })
        .collect()
}
