use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod trace;

/// Certificates, observability times and observer recovery for semilinear
/// wave equations with boundary damping.
#[derive(Debug, Parser)]
#[command(name = "wavecert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the LMIs for given (or searched) decision variables.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Decision variables, or a certificate emitted by `min-time`.
        #[arg(long)]
        vars: Option<PathBuf>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Smallest certified observability time T*.
    MinTime {
        #[arg(long)]
        config: PathBuf,
        /// Absolute tolerance on T*.
        #[arg(long)]
        tol: Option<f64>,
        /// Write the certificate here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest regional observability radius d0 (one dimension).
    Regional {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the plant and write the trajectory CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover the initial state from a boundary trace.
    Recover {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimal observability time for a list of problems.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status of a completed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Infeasible or not converged: a valid negative answer.
    Negative,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Certify { config, vars, margin } => commands::certify(&config, vars.as_deref(), margin),
        Command::MinTime { config, tol, out } => commands::min_time(&config, tol, out.as_deref()),
        Command::Regional { config, out } => commands::regional(&config, out.as_deref()),
        Command::Simulate { config, out } => commands::simulate(&config, &out),
        Command::Recover {
            config,
            trace,
            iterations,
            out,
        } => commands::recover(&config, &trace, iterations, &out),
        Command::Sweep { config, jobs, out } => commands::sweep(&config, jobs, &out),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
