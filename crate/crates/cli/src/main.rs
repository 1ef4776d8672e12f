//! `dpdtest`: robust density power divergence tests for linear regression.
//!
//! Every command reads a JSON config (`--config`) whose fields can be
//! overridden by flags, and writes `report.json`, `results.csv` and
//! `manifest.json` into `--out`.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_dpd::sim::Execution;

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "dpdtest", version, about = "Robust density power divergence tests for linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV dataset: header row, response first, then covariates
    #[arg(long, global = true, value_name = "PATH")]
    data: Option<PathBuf>,
    #[arg(long, global = true, value_name = "R")]
    tau: Option<f64>,
    /// Defaults to tau
    #[arg(long, global = true, value_name = "R")]
    gamma: Option<f64>,
    #[arg(long, global = true, value_name = "R")]
    alpha: Option<f64>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// first:r:v1,..,vr or linear:LFILE:l0FILE
    #[arg(long, global = true, value_name = "SPEC")]
    hypothesis: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the minimum DPD estimator, and the restricted one with --hypothesis
    Fit,
    /// Run the DPD based test of --hypothesis
    Test,
    /// Asymptotic power under contiguous alternatives
    Power {
        /// Alternative direction, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta: Option<Vec<f64>>,
    },
    /// Influence function curves over a grid of contamination points
    Influence,
    /// Monte Carlo size and power study
    Simulate {
        /// Worker threads (default: all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// Run replications on the calling thread
        #[arg(long)]
        sequential: bool,
    },
}

fn merge(common: Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.data = common.data.or(config.data);
    config.tau = common.tau.or(config.tau);
    config.gamma = common.gamma.or(config.gamma);
    config.alpha = common.alpha.or(config.alpha);
    config.seed = common.seed.or(config.seed);
    config.out = common.out.or(config.out);
    config.hypothesis = common.hypothesis.or(config.hypothesis);
    Ok(config)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let config = merge(cli.common)?;
    match cli.command {
        Command::Fit => commands::fit(&config),
        Command::Test => commands::test(&config),
        Command::Power { delta } => commands::power(&config, delta),
        Command::Influence => commands::influence(&config),
        Command::Simulate { threads, sequential } => {
            if let Some(t) = threads {
                set_threads(t)?;
            }
            let execution = if sequential { Execution::Sequential } else { Execution::Parallel };
            commands::simulate(&config, execution)
        }
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
