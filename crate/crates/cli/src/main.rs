//! `ood`: fit, score, evaluate and sweep out-of-domain detectors.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::config::FileConfig;

/// A problem with the invocation itself rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn configure_threads() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("OOD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| UsageError(format!("OOD_THREADS must be a nonnegative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::SweepLayers(a) => commands::sweep_layers(a, &cfg),
        Command::Synth(a) => commands::synth(a, &cfg),
        Command::Tfidf(a) => commands::tfidf(a, &cfg),
        Command::Msp(a) => commands::msp(a, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
