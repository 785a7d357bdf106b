//! `bilimor` command-line front end.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod artifact;
mod cmd;
mod control;
mod failure;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use artifact::{Artifacts, Provenance};
use failure::{Failure, Outcome};

fn configure_threads() -> Outcome<()> {
    let Ok(value) = std::env::var("BILIMOR_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::config(format!("BILIMOR_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::config(format!("cannot configure thread pool: {e}")))
}

fn run(command: Command) -> Outcome<()> {
    configure_threads()?;
    let provenance = Provenance::new(&command)?;
    let out = Artifacts::new(command.out_dir(), provenance)?;
    match &command {
        Command::Gen(a) => cmd::gen::run(a, &out),
        Command::Reduce(a) => cmd::reduce::run(a, &out),
        Command::Bound(a) => cmd::bound::run(a, &out),
        Command::Simulate(a) => cmd::simulate::run(a, &out),
        Command::Validate(a) => cmd::validate::run(a, &out),
        Command::Mc(a) => cmd::mc::run(a, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
