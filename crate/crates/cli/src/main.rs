//! `structrobust` command-line tool. Every subcommand reads a JSON config and
//! writes files under an output prefix, so stages chain through CSV files.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "structrobust", version, about = "Robust mean estimation for structured data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset x = A z.
    Gen(Common),
    /// Apply an adversary's corruption plan to a dataset.
    Corrupt(Common),
    /// Recover corrupted samples and drop the unrecoverable ones.
    Recover(Common),
    /// Run mean estimators on a dataset.
    Estimate(Common),
    /// Evaluate an error metric or distribution distance.
    Metric(Common),
    /// Run a full corruption sweep.
    Experiment(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file; relative paths inside it resolve against its directory.
    #[arg(long, value_name = "JSON")]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output prefix; overrides the config's `output`.
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
    /// Worker threads for trials (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(c) => commands::gen(c),
        Command::Corrupt(c) => commands::corrupt(c),
        Command::Recover(c) => commands::recover(c),
        Command::Estimate(c) => commands::estimate(c),
        Command::Metric(c) => commands::metric(c),
        Command::Experiment(c) => commands::experiment(c),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
