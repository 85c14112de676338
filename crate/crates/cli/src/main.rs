mod args;
mod commands;
mod ingest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rerand::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot {action} {}: {source}", path.display())]
    Io {
        action: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl CliError {
    /// 3 when the request was well-formed but the criterion made it
    /// infeasible (budget exhausted, empty acceptable set, ...); 2 for
    /// everything the caller can fix by changing the invocation or inputs.
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(e) if e.is_feasibility() => ExitCode::from(3),
            _ => ExitCode::from(2),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log::warn!("cannot size the worker pool: {e}");
        }
    }

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
