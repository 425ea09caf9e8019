//! `mmvir` binary entry point.
//!
//! Exit codes: 0 success, 1 internal error, 2 input/config error, 3 gateway
//! failure.

mod cli;
mod commands;
mod config;

use std::fmt;

use clap::Parser;

use mmvir_core::builder::BuildError;
use mmvir_core::gateway::GatewayError;
use mmvir_core::retrieval::RetrievalError;

#[derive(Debug)]
pub enum CliError {
    /// Bad inputs or configuration (exit 2).
    Input(anyhow::Error),
    /// Model-service failure (exit 3).
    Gateway(anyhow::Error),
    /// A bug on our side (exit 1).
    Internal(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Input(_) => 2,
            CliError::Gateway(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) | CliError::Gateway(e) | CliError::Internal(e) => {
                write!(f, "{e:#}")
            }
        }
    }
}

fn gateway_is_config_problem(e: &GatewayError) -> bool {
    matches!(
        e,
        GatewayError::Precondition(_) | GatewayError::BlockLimit { .. }
    )
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match &e {
            BuildError::Gateway { source, .. } if gateway_is_config_problem(source) => {
                CliError::Input(e.into())
            }
            BuildError::Gateway { .. }
            | BuildError::CaptionParse { .. }
            | BuildError::EmptyCaption => CliError::Gateway(e.into()),
            BuildError::Validation(_) => CliError::Internal(e.into()),
            _ => CliError::Input(e.into()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match &e {
            RetrievalError::Gateway(source) if !gateway_is_config_problem(source) => {
                CliError::Gateway(e.into())
            }
            _ => CliError::Input(e.into()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        if gateway_is_config_problem(&e) {
            CliError::Input(e.into())
        } else {
            CliError::Gateway(e.into())
        }
    }
}

fn run(cli: cli::Cli) -> Result<(), CliError> {
    match &cli.command {
        cli::Command::Segment(args) => commands::cmd_segment(args),
        cli::Command::Build(args) => commands::cmd_build(args),
        cli::Command::Index(args) => commands::cmd_index(args),
        cli::Command::Ask(args) => commands::cmd_ask(args),
        cli::Command::Summarize(args) => commands::cmd_summarize(args),
        cli::Command::Locate(args) => commands::cmd_locate(args),
        cli::Command::Eval(args) => commands::cmd_eval(args),
        cli::Command::Stats(args) => commands::cmd_stats(args),
    }
}

fn main() {
    let cli = cli::Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.code());
        }
    }
}
