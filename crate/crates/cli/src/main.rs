//! `kbc`: prepare datasets, train and evaluate factorization models, run
//! hyper-parameter grids and the numerical oracles.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure, 3 a verification oracle failed.

mod evaluate;
mod failure;
mod grid;
mod prepare;
mod run;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kbc_core::data::Split;

use failure::exit_code;

#[derive(Parser)]
#[command(name = "kbc", version, about = "Knowledge base completion by tensor factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse train/valid/test.txt into binary caches plus vocabularies.
    PrepareData {
        /// Directory holding train.txt, valid.txt and test.txt.
        #[arg(long)]
        input: PathBuf,
        /// Where the caches and manifest are written.
        #[arg(long)]
        output: PathBuf,
        /// Accept entities or predicates that first appear in valid/test.
        #[arg(long)]
        allow_unseen: bool,
    },
    /// Train one model from a JSON or TOML run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a prepared split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Prepared dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Break metrics down by relation category.
        #[arg(long)]
        by_type: bool,
        /// Rank against every candidate instead of filtering known triples.
        #[arg(long)]
        raw: bool,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run every cell of a hyper-parameter grid, resuming completed cells.
    Grid {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run the numerical oracles and report pass/fail per check.
    Verify {
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restarts of the decomposition search in the certificate.
        #[arg(long, default_value_t = 50)]
        restarts: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::PrepareData { input, output, allow_unseen } => prepare::cmd_prepare_data(&input, &output, allow_unseen),
        Command::Train { config } => run::cmd_train(&config),
        Command::Eval { checkpoint, data, split, by_type, raw, json } => {
            evaluate::cmd_eval(&checkpoint, &data, split, by_type, raw, json)
        }
        Command::Grid { spec } => grid::cmd_grid(&spec),
        Command::Verify { json, seed, restarts } => verify::cmd_verify(json, seed, restarts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
