// SPDX-License-Identifier: MIT OR Apache-2.0

//! `n2g`: build, evaluate and query neuron graphs.

mod commands;
mod inputs;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Exit status for bad flags, unreadable input and malformed queries.
const EXIT_USAGE: u8 = 2;
/// Exit status when the sidecar cannot be reached.
const EXIT_UNREACHABLE: u8 = 3;

/// An error with a fixed exit status.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> anyhow::Error {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
        .into()
    }

    pub fn input(message: impl Into<String>) -> anyhow::Error {
        Self::usage(message)
    }

    pub fn unreachable(message: impl Into<String>) -> anyhow::Error {
        Self {
            code: EXIT_UNREACHABLE,
            message: message.into(),
        }
        .into()
    }

    pub fn total(message: impl Into<String>) -> anyhow::Error {
        Self {
            code: 1,
            message: message.into(),
        }
        .into()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

#[derive(Parser, Debug)]
#[command(
    name = "n2g",
    version,
    about = "Build, evaluate and query neuron graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code;
    }
    match err.downcast_ref::<n2g::Error>() {
        Some(n2g::Error::Transport(_)) => EXIT_UNREACHABLE,
        Some(
            n2g::Error::InvalidInput(_)
            | n2g::Error::InvalidQuery(_)
            | n2g::Error::Parse { .. }
            | n2g::Error::Schema(_)
            | n2g::Error::Io { .. }
            | n2g::Error::Json(_)
            | n2g::Error::FormatVersion { .. }
            | n2g::Error::CorruptCorpus(_),
        ) => EXIT_USAGE,
        _ => 1,
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
