mod commands;
mod config;
mod output;
mod plot;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::config::{Cli, Run, RunConfig, UsageError};

const EXIT_DOMAIN: u8 = 1;
const EXIT_CONVERGENCE: u8 = 2;
const EXIT_USAGE: u8 = 64;

enum Failure {
    Usage(UsageError),
    Compute(hslab::Error),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Compute(e) if e.is_convergence_failure() => EXIT_CONVERGENCE,
            Failure::Compute(_) | Failure::Io(_) => EXIT_DOMAIN,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "usage error: {e}"),
            Failure::Compute(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

fn resolve(cli: &Cli) -> Result<Run, UsageError> {
    let mut cfg = RunConfig::from_cli(cli);
    if let Some(path) = &cli.config {
        cfg = cfg.overlay(&RunConfig::load(path)?);
    }
    Run::from_config(&cfg)
}

fn write_outputs(run: &Run, outcome: &commands::Outcome) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(e.to_string());
    let json = output::to_json(&outcome.report).map_err(|e| Failure::Io(e.to_string()))?;
    if let Some(path) = &run.output.csv {
        let csv = outcome.table.to_csv().map_err(|e| Failure::Io(e.to_string()))?;
        output::write_atomic(path, &csv).map_err(io)?;
    }
    if let (Some(path), Some(plot)) = (&run.output.svg, &outcome.plot) {
        output::write_atomic(path, plot.render().as_bytes()).map_err(io)?;
    }
    match &run.output.json {
        Some(path) => output::write_atomic(path, &json).map_err(io)?,
        None => std::io::stdout().write_all(&json).map_err(io)?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let run = resolve(cli).map_err(Failure::Usage)?;
    let threads = config::thread_cap().map_err(Failure::Usage)?;
    let work = || commands::execute(&run.job);
    let outcome = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Failure::Io(e.to_string()))?
            .install(work),
        None => work(),
    }
    .map_err(Failure::Compute)?;
    write_outputs(&run, &outcome)?;
    match outcome.failure {
        Some(e) => Err(Failure::Compute(e)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hslab: {f}");
            ExitCode::from(f.code())
        }
    }
}
