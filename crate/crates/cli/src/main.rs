//! `dextra`: generate instances, certify step sizes, and run, compare and
//! sweep distributed optimization algorithms.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "dextra", version, about = "Distributed optimization over directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a graph, weight matrices, objective and manifest
    Generate,
    /// Compute the certified step-size interval (exit 2 if infeasible)
    Certify,
    /// Run one algorithm (the first of --algo; exit 3 on divergence)
    Run,
    /// Run several algorithms and plot their residuals
    Compare,
    /// Sweep step sizes under local-degree and constant weights
    Sweep,
}

#[derive(Args)]
struct Flags {
    /// Experiment configuration (ini with sections)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; also the instance location unless the config names one
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Step size
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Comma-separated step sizes
    #[arg(long, global = true)]
    alpha_grid: Option<String>,
    /// Comma-separated algorithms: dextra, extra, dgd-row, gradient-push
    #[arg(long, global = true)]
    algo: Option<String>,
    /// Seed for both the graph and the data
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Target residual
    #[arg(long, global = true)]
    target: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let f = cli.flags;
    let overrides = Overrides {
        out: f.out,
        alpha: f.alpha,
        alpha_grid: f.alpha_grid,
        algorithms: f.algo,
        seed: f.seed,
        max_iter: f.max_iter,
        target: f.target,
    };
    let result = ExperimentConfig::load(f.config.as_deref(), &overrides).and_then(|cfg| match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Certify => commands::certify(&cfg),
        Command::Run => commands::run(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Sweep => commands::sweep(&cfg),
    });
    match result {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
