//! Command-line front end for the ldpclab experiments.
//!
//! Exit status: 0 success, 2 configuration or input error, 3 enumeration
//! budget exceeded, 4 failed acceptance check under `--assert`, 1 otherwise.

mod config;
mod error;
mod run;

use std::process::ExitCode;

use clap::Parser;

use crate::config::{resolve, Cli};
use crate::error::{CliError, CliResult};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main_inner(cli: Cli) -> CliResult<()> {
    let inv = resolve(cli)?;
    let outcome = run::execute(&inv)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    if outcome.capacity_skips > 0 {
        return Err(CliError::Capacity(format!(
            "{} instances exceeded the enumeration budget (rerun with --skip-infeasible to accept)",
            outcome.capacity_skips
        )));
    }
    if inv.assert && !outcome.failures.is_empty() {
        return Err(CliError::Assert(outcome.failures.join("; ")));
    }
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!("warning: {f}");
        }
    }
    Ok(())
}
