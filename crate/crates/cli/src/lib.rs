//! Command-line pipeline: measure a device, fit a cost predictor, search,
//! evaluate, and run the λ-sweep and multi-target experiments.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::commands::{CliError, SearchMode};
use crate::config::{PredictorKind, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "nasc",
    version,
    about = "Latency-constrained differentiable architecture search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample random architectures on the synthetic device.
    Measure {
        #[command(flatten)]
        common: Common,
        /// Number of architectures (default: predictor.samples).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a latency predictor and report held-out residuals.
    TrainPredictor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: Option<PredictorKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one architecture search.
    #[command(group(ArgGroup::new("mode").args(["target_ms", "lambda", "accuracy_only"])))]
    Search {
        #[command(flatten)]
        common: Common,
        /// Learn λ so the result meets this target.
        #[arg(long)]
        target_ms: Option<f64>,
        /// Fixed trade-off coefficient.
        #[arg(long)]
        lambda: Option<f64>,
        /// Ignore latency altogether.
        #[arg(long)]
        accuracy_only: bool,
        /// Run every operator per layer instead of one sampled path.
        #[arg(long)]
        multipath: bool,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a searched architecture from scratch.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        arch: PathBuf,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed-λ searches over a grid of coefficients.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.0, 0.25, 0.5, 1.0])]
        lambdas: Vec<f64>,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the stand-alone evaluation of each result.
        #[arg(long)]
        no_eval: bool,
    },
    /// Learnable-λ searches for several targets and seeds.
    Multitarget {
        #[command(flatten)]
        common: Common,
        /// Targets (default: five spread over the feasible range).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        targets: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_eval: bool,
    },
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let load = |c: &Common| RunConfig::load(&c.config).map_err(CliError::from);
    match cli.command {
        Command::Measure { common, n, out } => {
            commands::measure(&load(&common)?, n, out.as_deref())
        }
        Command::TrainPredictor {
            common,
            measurements,
            kind,
            out,
        } => commands::train_predictor(
            &load(&common)?,
            measurements.as_deref(),
            kind,
            out.as_deref(),
        ),
        Command::Search {
            common,
            target_ms,
            lambda,
            accuracy_only,
            multipath,
            predictor,
            out,
        } => {
            let mode = match (target_ms, lambda, accuracy_only) {
                (Some(t), _, _) => SearchMode::Target(t),
                (_, Some(l), _) => SearchMode::Lambda(l),
                (_, _, true) => SearchMode::AccuracyOnly,
                _ => SearchMode::FromConfig,
            };
            commands::search(
                &load(&common)?,
                mode,
                predictor.as_deref(),
                out.as_deref(),
                multipath,
            )
        }
        Command::Eval {
            common,
            arch,
            predictor,
            out,
        } => commands::eval(&load(&common)?, &arch, predictor.as_deref(), out.as_deref()),
        Command::Sweep {
            common,
            lambdas,
            predictor,
            out,
            no_eval,
        } => commands::sweep(
            &load(&common)?,
            &lambdas,
            predictor.as_deref(),
            out.as_deref(),
            no_eval,
        ),
        Command::Multitarget {
            common,
            targets,
            seeds,
            predictor,
            out,
            no_eval,
        } => commands::multitarget(
            &load(&common)?,
            &targets,
            seeds,
            predictor.as_deref(),
            out.as_deref(),
            no_eval,
        ),
    }
}
