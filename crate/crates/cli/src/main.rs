//! `salsr`: saliency maps, LR synthesis, GAN training, super-resolution,
//! evaluation and loss ablations from the command line.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 shape error,
//! 5 training divergence.

mod commands;
mod config;
mod error;
mod flags;
mod run;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::{ablate, degrade, eval, saliency, sr, train};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "salsr", version, about = "Saliency-guided super-resolution of retinal images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Saliency(saliency::SaliencyArgs),
    Degrade(degrade::DegradeArgs),
    Train(train::TrainArgs),
    Sr(sr::SrArgs),
    Eval(eval::EvalArgs),
    Ablate(ablate::AblateArgs),
}

fn dispatch(cli: &Cli, m: &clap::ArgMatches) -> CliResult<()> {
    match &cli.command {
        Command::Saliency(a) => saliency::run(a, m),
        Command::Degrade(a) => degrade::run(a, m),
        Command::Train(a) => train::run(a, m),
        Command::Sr(a) => sr::run(a, m),
        Command::Eval(a) => eval::run(a, m),
        Command::Ablate(a) => ablate::run(a, m),
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let (_, sub) = matches.subcommand().expect("a subcommand is required");
    match dispatch(&cli, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
