//! Driver for the frame-bundle identity checks: configuration, suites,
//! convergence studies, trajectory export and reports.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig, Suite, SEED_ENV};

/// Exit status for configuration and domain errors.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pestov-lab", version, about = "Verify frame-bundle structure equations and Pestov identities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a check suite and write report.json and summary.csv.
    Check(CommonArgs),
    /// Run a step or sample-count ladder and write convergence.csv.
    Convergence(CommonArgs),
    /// Integrate the frame flow and write flow.csv.
    Flow(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Model kind: flat_torus, round_sphere, hyperbolic_ball, perturbed_hyperbolic.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long)]
    pub count: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = automatic).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    pub fn load(&self) -> anyhow::Result<RunConfig> {
        let o = Overrides {
            suite: self.suite,
            model: self.model.clone(),
            dim: self.dim,
            seed: self.seed,
            count: self.count,
            out: self.out.clone(),
            workers: self.workers,
        };
        RunConfig::load(self.config.as_deref(), std::env::var(SEED_ENV).ok(), &o)
    }
}

/// Run a parsed command and return the process exit status.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Check(a) => a.load().and_then(|c| commands::cmd_check(&c).map(|r| r.1)),
        Command::Convergence(a) => a.load().and_then(|c| commands::cmd_convergence(&c).map(|r| r.1)),
        Command::Flow(a) => a.load().and_then(|c| commands::cmd_flow(&c)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
