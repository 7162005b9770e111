//! `chaoscast` command-line pipeline: synthetic data diagnostics, pretraining,
//! evaluation, market ingestion, backtesting and report rendering.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric, 5 I/O, 1 anything else.

mod cli;
mod commands;
mod config;
mod manifest;
mod svg;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::cli::Cli;
use crate::config::UsageError;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_IO: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<chaoscast::Error>() {
            return match e.class() {
                chaoscast::ErrorClass::Usage => EXIT_USAGE,
                chaoscast::ErrorClass::Data => EXIT_DATA,
                chaoscast::ErrorClass::Numeric => EXIT_NUMERIC,
                chaoscast::ErrorClass::Io => EXIT_IO,
            };
        }
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_DATA;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let start = Instant::now();
    match commands::run(&cli, start) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
