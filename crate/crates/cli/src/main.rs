//! Command-line surface for the interval IFS laboratory.
//!
//! One binary with subcommands; every subcommand accepts `--config` with a
//! TOML or JSON document whose keys match the long flag names (config values
//! override flags, so campaign definitions checked into a repository stay
//! authoritative). Exit codes: 0 success, 1 failed acceptance criteria,
//! 2 usage, 3 I/O, 4 numerical, 5 precondition/regime.

mod args;
mod run;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match run::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
