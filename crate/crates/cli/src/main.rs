//! `rcvar`: build the grid world, solve robust CVaR problems, render the value
//! function and check the robust bound by simulation.
//!
//! Exit codes: 0 success, 2 invalid input, 3 no convergence (artifacts are
//! still written), 64 usage error, 69 unsupported request, 70 numerical
//! failure, 74 I/O failure.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod image;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rcvar_core::Error;

use commands::{Outcome, ReductionKind};
use config::ExperimentConfig;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_UNSUPPORTED: u8 = 69;
const EXIT_NUMERIC: u8 = 70;
const EXIT_IO: u8 = 74;

#[derive(Debug, Parser)]
#[command(name = "rcvar", version, about = "Robust CVaR value iteration on tabular MDPs")]
struct Cli {
    /// Experiment configuration (JSON); defaults apply to missing fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for all artifacts; overrides the configuration.
    #[arg(long, global = true, value_name = "PATH")]
    output_dir: Option<PathBuf>,
    /// Rollout seed; overrides the configuration.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Worker threads for sweeps and rollouts (default: all cores).
    #[arg(long, global = true, value_name = "INT", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the grid-world MDP and an obstacle-map preview.
    BuildEnv,
    /// Print the confidence level of the equivalent risk-sensitive problem.
    Reduce {
        #[arg(long)]
        alpha: f64,
        /// `K` for rn, `kappa` for kl.
        #[arg(long)]
        budget: f64,
        #[arg(long, value_enum)]
        kind: ReductionKind,
    },
    /// Run value iteration and write the result table and summary.
    Solve {
        /// Solve this MDP file instead of building the configured grid.
        #[arg(long, value_name = "PATH")]
        mdp: Option<PathBuf>,
    },
    /// Draw the value heatmap and the greedy path of a solved grid world.
    Render {
        /// Level at which to draw `V*(., alpha)`; defaults to the configured alpha.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Roll out the robust policy under nominal, sampled and adversarial kernels.
    Evaluate {
        /// Also write each kernel's raw costs, one per line.
        #[arg(long)]
        samples: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<Error>() {
            return match core {
                Error::Domain(_) | Error::Validation(_) | Error::Parse { .. } => EXIT_VALIDATION,
                Error::Unsupported(_) => EXIT_UNSUPPORTED,
                Error::Numeric(_) => EXIT_NUMERIC,
                Error::Io(_) => EXIT_IO,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_NUMERIC
}

/// The configuration file if given, else the one echoed by a previous solve
/// in the output directory, else the defaults; then command-line overrides.
fn load_config(cli: &Cli, echoed: Option<&ExperimentConfig>) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, echoed) {
        (Some(path), _) => {
            ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))?
        }
        (None, Some(cfg)) => cfg.clone(),
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.rollout.seed = seed;
    }
    cfg.solver.threads = None;
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cli: &Cli) -> Result<PathBuf> {
    match (&cli.output_dir, &cli.config) {
        (Some(dir), _) => Ok(dir.clone()),
        (None, Some(_)) => Ok(load_config(cli, None)?.output_dir),
        (None, None) => Ok(ExperimentConfig::default().output_dir),
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("starting the thread pool")?;
    }
    match &cli.command {
        Command::BuildEnv => {
            let cfg = load_config(&cli, None)?;
            commands::build_env(&cfg, &cfg.output_dir)
        }
        Command::Reduce { alpha, budget, kind } => commands::reduce(*alpha, *budget, *kind),
        Command::Solve { mdp } => {
            let cfg = load_config(&cli, None)?;
            commands::solve(&cfg, &cfg.output_dir, mdp.as_deref())
        }
        Command::Render { alpha } => {
            let dir = output_dir(&cli)?;
            let solved = commands::load_solved(&dir)?;
            let cfg = load_config(&cli, solved.config.as_ref())?;
            let alpha = alpha.unwrap_or(cfg.alpha);
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Domain(format!("alpha {alpha} not in (0, 1]")).into());
            }
            commands::render(&solved, alpha, &dir)
        }
        Command::Evaluate { samples } => {
            let dir = output_dir(&cli)?;
            let solved = commands::load_solved(&dir)?;
            let cfg = load_config(&cli, solved.config.as_ref())?;
            commands::evaluate(&solved, &cfg, &dir, *samples)
        }
    }
}
