//! `nsotree`: simulate survival data, train NSOTree and linear Cox models,
//! evaluate them and extract their oblique trees.

mod commands;
mod config;
mod data;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{crossval, eval, extract, simulate, sweep, train};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; exit status 2.
    Usage(String),
    /// Failure while running; exit status 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "nsotree", version, about = "Neural survival oblique trees")]
struct Cli {
    /// TOML file of `flag = value` defaults; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More logging (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/valid/test splits from a known risk function
    Simulate(simulate::SimulateArgs),
    /// Fit a model with early stopping and write a checkpoint
    Train(train::TrainArgs),
    /// Score a checkpoint: C-index, Brier curve, IBS, Pearson r vs truth
    Eval(eval::EvalArgs),
    /// Export the oblique tree of a checkpoint with per-split log-rank tests
    Extract(extract::ExtractArgs),
    /// Train once per depth or prox strength
    Sweep(sweep::SweepArgs),
    /// k-fold cross-validated C-index
    Crossval(crossval::CrossvalArgs),
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => simulate::run(config::resolve(&a, cfg)?),
        Command::Train(a) => train::run(config::resolve(&a, cfg)?),
        Command::Eval(a) => eval::run(config::resolve(&a, cfg)?),
        Command::Extract(a) => extract::run(config::resolve(&a, cfg)?),
        Command::Sweep(a) => sweep::run(config::resolve(&a, cfg)?),
        Command::Crossval(a) => crossval::run(config::resolve(&a, cfg)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
