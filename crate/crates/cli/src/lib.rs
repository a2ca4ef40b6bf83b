//! Command-line front end for the `demsim-core` simulations: argument and
//! config-file resolution, experiment orchestration and CSV output.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

use clap::Parser;

pub use commands::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config entries or parameter values.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Core(#[from] demsim_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use demsim_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::InvalidParameter(_) | E::TooLarge(_) | E::DegenerateGeometry(_)) => 2,
            CliError::Core(_) | CliError::Runtime(_) => 1,
        }
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("demsim: error: {e}");
            e.exit_code()
        }
    }
}
