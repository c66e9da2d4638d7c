//! Command-line front end for `rdgeo`.

pub mod args;
pub mod commands;
pub mod output;
pub mod synth;

use std::io::Write;

use anyhow::{Context, Result};

use args::{Cli, Command};
use commands::Outcome;

/// Exit status of a run that produced its outputs but hit numerical trouble.
pub const EXIT_WARNING: i32 = 2;
/// Exit status of a run rejected for bad input; nothing is written.
pub const EXIT_ERROR: i32 = 1;

/// Runs a parsed command, writing its files at the very end.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let outcome = match &cli.command {
        Command::Compress(a) => commands::compress(a, false)?,
        Command::Classify(a) => commands::compress(a, true)?,
        Command::Curve(a) => commands::curve(a)?,
        Command::CompareModels(a) => commands::compare_models(a)?,
        Command::BifurcationScan(a) => commands::bifurcation_scan(a)?,
        Command::Bootstrap(a) => commands::bootstrap(a)?,
        Command::Synth(a) => {
            let csv = commands::synth(a)?;
            match &a.output {
                Some(path) => std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().lock().write_all(&csv)?,
            }
            return Ok(Outcome::default());
        }
    };
    if let Some(dir) = &outcome.out_dir {
        if outcome.outputs.names().next().is_some() {
            outcome.outputs.write_all(dir)?;
        }
    }
    Ok(outcome)
}

/// Process exit status for the result of [`run`].
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.warnings.is_empty() => 0,
        Ok(_) => EXIT_WARNING,
        Err(_) => EXIT_ERROR,
    }
}
