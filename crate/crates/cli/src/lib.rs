//! Command-line front end for `qdensity`.
//!
//! Exit codes: 0 success, 1 mathematical-domain error (inadmissible `q` or
//! `lambda`), 2 usage error, 3 an identity check failed, 4 output could
//! not be written.

pub mod args;
pub mod commands;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::{CommandFactory, Parser};

use args::{Cli, Settings};

pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IDENTITY_FAILED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
    Core(qdensity::Error),
    Io(String),
}

impl From<qdensity::Error> for CliError {
    fn from(e: qdensity::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) => match e {
                qdensity::Error::InvalidQ(_)
                | qdensity::Error::Domain(_)
                | qdensity::Error::NonConvergence(_)
                | qdensity::Error::InexactDivision => EXIT_DOMAIN,
                _ => EXIT_USAGE,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Domain(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Reports go to `--out` or standard output; diagnostics
/// go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", Cli::command().render_help());
            }
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            if e.exit_code() == EXIT_USAGE {
                eprintln!("\n{}", Cli::command().render_help());
            }
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let settings = Settings::resolve(cli.options)?;
    let outcome = commands::dispatch(cli.command, &settings)?;
    let text = outcome
        .report
        .render(settings.format)
        .map_err(|e| CliError::Io(e.to_string()))?;
    match &settings.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?,
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string()))?,
    }
    if outcome.passed {
        Ok(0)
    } else {
        eprintln!("error: at least one identity check failed");
        Ok(EXIT_IDENTITY_FAILED)
    }
}
