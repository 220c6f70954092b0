//! `softremish`: train the benchmark CNN, sweep activations, emit curve data.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};
use softremish::{OptimizerKind, Precision};

use crate::commands::CliError;
use crate::config::{parse_activations, parse_order, Command, ConfigError, Effective, Settings};

const ACTIVATION_NAMES: [&str; 5] = ["relu", "tanh", "softplus", "mish", "softremish"];

#[derive(Parser)]
#[command(name = "softremish", version, about = "Activation-function benchmark for a small MNIST CNN")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one model and write per-epoch metrics.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// Train every requested activation `repeats` times and write summary tables.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        training: TrainingArgs,
        /// Runs per activation; run r uses seed + r.
        #[arg(long)]
        repeats: Option<usize>,
        /// Worker threads when --deterministic false (0 = one per CPU).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write sampled activation curves and derivatives as CSV.
    Curves {
        #[command(flatten)]
        common: CommonArgs,
        /// Derivative order; all three when omitted.
        #[arg(long, value_parser = PossibleValuesParser::new(["0", "1", "2"]))]
        order: Option<String>,
        /// Sampling interval.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        /// Points per curve, endpoints included.
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Activation function(s); repeat or comma-separate for bench and curves.
    #[arg(long, value_delimiter = ',', value_parser = PossibleValuesParser::new(ACTIVATION_NAMES), ignore_case = true)]
    activation: Vec<String>,
    /// SoftReMish slope parameter.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainingArgs {
    /// Passes over the training set.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Base seed for weight initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Learning rate.
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// Directory with the four MNIST IDX files (raw or .gz).
    #[arg(long, conflicts_with = "synthetic")]
    data_dir: Option<PathBuf>,
    /// Train on this many synthetic digits instead of MNIST.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Seed of the synthetic digit stream.
    #[arg(long)]
    data_seed: Option<u64>,
    /// Use the activation in the 128-unit dense layer too (otherwise ReLU).
    #[arg(long)]
    sweep_dense: Option<bool>,
    /// Forbid concurrent runs in a sweep.
    #[arg(long)]
    deterministic: Option<bool>,
    /// Floating-point precision: single or double.
    #[arg(long)]
    precision: Option<Precision>,
}

impl CommonArgs {
    fn apply(&self, s: &mut Settings) -> Result<(), String> {
        if !self.activation.is_empty() {
            s.activation = Some(parse_activations(&self.activation.join(","))?);
        }
        s.alpha = self.alpha;
        s.out = self.out.clone();
        Ok(())
    }
}

impl TrainingArgs {
    fn apply(&self, s: &mut Settings) {
        s.epochs = self.epochs;
        s.batch = self.batch;
        s.seed = self.seed;
        s.lr = self.lr;
        s.optimizer = self.optimizer;
        s.data_dir = self.data_dir.clone();
        s.synthetic = self.synthetic;
        s.data_seed = self.data_seed;
        s.sweep_dense = self.sweep_dense;
        s.deterministic = self.deterministic;
        s.precision = self.precision;
    }
}

fn resolve(command: Command, common: &CommonArgs, flags: Settings) -> Result<Effective, CliError> {
    let file = match &common.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(Effective::resolve(&file.overlay(flags), command)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut flags = Settings::default();
    match cli.command {
        Cmd::Train { common, training } => {
            common.apply(&mut flags).map_err(CliError::Usage)?;
            training.apply(&mut flags);
            commands::train(&resolve(Command::Train, &common, flags)?)
        }
        Cmd::Bench { common, training, repeats, threads } => {
            common.apply(&mut flags).map_err(CliError::Usage)?;
            training.apply(&mut flags);
            flags.repeats = repeats;
            flags.threads = threads;
            commands::bench(&resolve(Command::Bench, &common, flags)?)
        }
        Cmd::Curves { common, order, range, samples } => {
            common.apply(&mut flags).map_err(CliError::Usage)?;
            flags.order = order.as_deref().map(parse_order).transpose().map_err(CliError::Usage)?;
            flags.range = range.map(|r| (r[0], r[1]));
            flags.samples = samples;
            commands::curves(&resolve(Command::Curves, &common, flags)?)
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
