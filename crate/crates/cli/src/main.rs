mod cli;
mod commands;
mod config;
mod output;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

/// Invalid command-line or config-file input, reported before any work starts.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn category(err: &anyhow::Error) -> &'static str {
    if err.downcast_ref::<UsageError>().is_some() {
        return "config";
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<lexcase_core::Error>() {
            return e.category();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "data"
}

fn run() -> anyhow::Result<()> {
    let args = config::merge(std::env::args_os().collect())?;
    let cli = cli::Cli::parse_from(args);
    let out = commands::run(&cli.command)?;
    log::info!("{} wrote {}", cli.command.name(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let cat = category(&err);
            eprintln!("error[{cat}]: {err:#}");
            ExitCode::from(if cat == "config" { 2 } else { 1 })
        }
    }
}
