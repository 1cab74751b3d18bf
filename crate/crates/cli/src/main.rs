//! `aggnash` — pipeline front end: generate an instance, solve it, recover a
//! feasible profile, verify its equilibrium quality, or run the benchmark.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure.

mod args;
mod commands;

use clap::error::ErrorKind;
use clap::Parser;

use aggnash_core::Error;

fn main() {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    if let Err(err) = commands::dispatch(cli) {
        eprintln!("error: {err}");
        let code = match err {
            Error::Numerical(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}
