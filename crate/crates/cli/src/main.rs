//! `gmcs` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure of a command, carrying the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<gmcs::Error> for CliError {
    fn from(e: gmcs::Error) -> Self {
        match e {
            gmcs::Error::InvalidParameter(_) => CliError::Usage(e.to_string()),
            gmcs::Error::Numerical(_) => CliError::Numerical(e.to_string()),
            gmcs::Error::Io { .. }
            | gmcs::Error::Parse { .. }
            | gmcs::Error::DimensionMismatch { .. }
            | gmcs::Error::InvalidData(_) => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("GMCS_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let workers = cli.command.common().workers;
    if workers == Some(0) {
        eprintln!("gmcs: usage error: --workers must be at least 1");
        return ExitCode::from(2);
    }
    let result = gmcs::compose::with_workers(workers, || match &cli.command {
        Command::Gen(a) => commands::gen(a, &argv),
        Command::Build(a) => commands::build(a, &argv),
        Command::Fit(a) => commands::fit(a, &argv),
        Command::Eval(a) => commands::eval(a, &argv),
        Command::StreamDemo(a) => commands::stream_demo(a, &argv),
    });
    match result.map_err(CliError::from).and_then(|r| r) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gmcs: {e}");
            ExitCode::from(e.code())
        }
    }
}
