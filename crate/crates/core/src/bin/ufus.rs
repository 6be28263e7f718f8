use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use ufus::cli::{error_line, run_subcommand, RunOptions, Subcommand};
use ufus::config::EstimatorKind;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Estimate,
    Tune,
    Compare,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Estimator {
    Uf,
    Us,
    Akf,
}

/// Joint input-state estimation for shear frames.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<Estimator>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cmd = match args.command {
        Command::Simulate => Subcommand::Simulate,
        Command::Estimate => Subcommand::Estimate,
        Command::Tune => Subcommand::Tune,
        Command::Compare => Subcommand::Compare,
    };
    let opts = RunOptions {
        config: args.config,
        out: args.out,
        seed: args.seed,
        estimator: args.estimator.map(|e| match e {
            Estimator::Uf => EstimatorKind::Uf,
            Estimator::Us => EstimatorKind::Us,
            Estimator::Akf => EstimatorKind::Akf,
        }),
    };
    match run_subcommand(cmd, &opts) {
        Ok(summary) => {
            println!("wrote {}", summary.out_dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
