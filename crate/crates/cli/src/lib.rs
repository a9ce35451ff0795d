//! Command-line front end: configuration handling, panel CSV ingestion and
//! subcommand dispatch. Every run produces a key-sorted JSON record holding
//! the effective configuration, library version, seeds and result.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use clap::{Parser, Subcommand};
use serde_json::json;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "panelbounds",
    version,
    about = "Bounds and confidence intervals for average effects in binary-choice panels"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PANELBOUNDS_THREADS")]
    pub threads: Option<usize>,
    /// JSON configuration file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the JSON result record here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample outer bounds on the average effect.
    #[command(allow_negative_numbers = true)]
    Bounds(RunConfig),
    /// Confidence interval for the average effect.
    #[command(allow_negative_numbers = true)]
    Infer(RunConfig),
    /// Sharp identified set from data cells or a design's population.
    #[command(allow_negative_numbers = true)]
    Idset(RunConfig),
    /// Monte Carlo replications of one design.
    #[command(allow_negative_numbers = true)]
    Simulate(RunConfig),
    /// Monte Carlo replications over a list of design parameters.
    #[command(allow_negative_numbers = true)]
    Sweep(RunConfig),
    /// Population average effect of a design.
    #[command(allow_negative_numbers = true)]
    TrueEffect(RunConfig),
    /// Re-solve and check bound functions written by `bounds --dump`.
    #[command(allow_negative_numbers = true)]
    ValidateBounds(RunConfig),
}

impl Command {
    fn split(self) -> (&'static str, RunConfig) {
        match self {
            Command::Bounds(c) => ("bounds", c),
            Command::Infer(c) => ("infer", c),
            Command::Idset(c) => ("idset", c),
            Command::Simulate(c) => ("simulate", c),
            Command::Sweep(c) => ("sweep", c),
            Command::TrueEffect(c) => ("true-effect", c),
            Command::ValidateBounds(c) => ("validate-bounds", c),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code: 0 success, 2 invalid input, 3 numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<i32> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        // Fails only if a pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let (name, flags) = cli.command.split();
    let file = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let mut cfg = file.merged(&flags);
    if let Some(c) = &cfg.command {
        if c != name {
            return Err(CliError::validation(format!(
                "config key `command` is `{c}` but the subcommand is `{name}`"
            )));
        }
    }
    cfg.command = Some(name.to_string());
    cfg.schema_version = Some(SCHEMA_VERSION);
    let outcome = match name {
        "bounds" => commands::bounds(&mut cfg),
        "infer" => commands::infer(&mut cfg),
        "idset" => commands::idset(&mut cfg),
        "simulate" => commands::simulate(&mut cfg),
        "sweep" => commands::sweep(&mut cfg),
        "true-effect" => commands::true_effect(&mut cfg),
        _ => commands::validate_bounds(&mut cfg),
    }?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let record = json!({
        "command": name,
        "config": cfg.to_value(),
        "version": env!("CARGO_PKG_VERSION"),
        "seeds": outcome.seeds,
        "result": outcome.result,
        "warnings": outcome.warnings,
    });
    let mut text = serde_json::to_string_pretty(&record).expect("record serialises");
    text.push('\n');
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let print = |out: &mut std::io::StdoutLock, s: &str| {
        out.write_all(s.as_bytes())
            .map_err(|e| CliError::io("cannot write to standard output", e))
    };
    match &cli.output {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
            match &outcome.stdout {
                Some(s) => print(&mut out, s)?,
                None => print(&mut out, &format!("{}\n", outcome.summary))?,
            }
        }
        None => match &outcome.stdout {
            Some(s) => print(&mut out, s)?,
            None => print(&mut out, &text)?,
        },
    }
    if let Some(f) = outcome.failure {
        eprintln!("error: {f}");
        return Ok(f.exit_code());
    }
    Ok(0)
}
