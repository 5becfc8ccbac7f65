//! `qrng`: simulate a two-detector photonic random number generator,
//! analyze its output, evaluate the flip/hold formulas, run the acceptance
//! checks and sweep parameters.
//!
//! Exit codes: 0 success, 1 check or analysis failure, 2 usage, 3 IO or
//! parse error.

mod analyze;
mod config;
mod error;
mod predict;
mod report;
mod simulate;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qrng_core::validation::{self, Tier};

use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qrng", version, about = "Photonic QRNG simulator and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a device and write stream.bits, events.csv, feedback.csv and manifest.toml.
    Simulate(simulate::SimulateArgs),
    /// Analyze a bit file, count table, click log or feedback trace.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeTarget),
    /// Closed-form flip/hold statistics, forward or inverted.
    Predict(predict::PredictArgs),
    /// Run the acceptance checks.
    Validate(ValidateArgs),
    /// Evaluate one metric over a parameter grid.
    Sweep(sweep::SweepArgs),
}

#[derive(Debug, clap::Args)]
struct ValidateArgs {
    #[arg(long, default_value = "quick", value_parser = ["quick", "full"])]
    tier: String,
    /// Run only these criteria, e.g. `--only 1,3`.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
}

fn validate(args: &ValidateArgs) -> CliResult<()> {
    let tier: Tier = args.tier.parse()?;
    let ids: Vec<u8> = if args.only.is_empty() {
        validation::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        args.only.clone()
    };
    let mut failed = Vec::new();
    for id in ids {
        let r = validation::run_criterion(id, tier).map_err(|e| match e {
            qrng_core::Error::Config(m) => CliError::Usage(m),
            other => CliError::Failed(format!("criterion {id}: {other}")),
        })?;
        println!("{r}");
        if !r.passed {
            failed.push(id.to_string());
        }
    }
    if failed.is_empty() {
        println!("all criteria passed");
        Ok(())
    } else {
        Err(CliError::Failed(format!("failed criteria: {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Analyze(t) => analyze::run(&t),
        Command::Predict(a) => predict::run(&a),
        Command::Validate(a) => validate(&a),
        Command::Sweep(a) => sweep::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
