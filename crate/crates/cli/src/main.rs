//! `crfbench`: reproducible experiments with exact and approximate
//! structured inference on sequence-labeling tasks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{echo_config, load_config};

#[derive(Parser)]
#[command(
    name = "crfbench",
    about = "Train neural CRFs and benchmark exact vs. approximate inference",
    version
)]
struct Cli {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a single config key, e.g. --set crf.train.epochs=5 or
    /// --set gd.lr_grid=[1.0,0.1]. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/dev/test CoNLL files from the HMM spec.
    GenData,
    /// Train the BLSTM-CRF energy model.
    TrainCrf,
    /// Train an inference network against the frozen CRF energy.
    TrainInfnet,
    /// Train the local cross-entropy baseline (no energy term).
    TrainBaseline,
    /// Label a CoNLL file with one inference method.
    Infer {
        /// viterbi | gd | infnet | infnet-discretized | instance-tailored |
        /// warm-start | local-baseline
        #[arg(long)]
        method: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the full benchmark over the configured methods.
    Bench,
    /// Score a predictions file against gold labels.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let config = match load_config(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = echo_config(&config).and_then(|()| match &cli.command {
        Command::GenData => commands::cmd_gen_data(&config),
        Command::TrainCrf => commands::cmd_train_crf(&config),
        Command::TrainInfnet => commands::cmd_train_infnet(&config),
        Command::TrainBaseline => commands::cmd_train_baseline(&config),
        Command::Infer {
            method,
            input,
            output,
        } => commands::cmd_infer(&config, method, input, output),
        Command::Bench => commands::cmd_bench(&config),
        Command::Eval { gold, pred } => commands::cmd_eval(&config, gold, pred),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
