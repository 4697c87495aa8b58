// Guards written as `!(x > 0.0)` are deliberate: unlike `x <= 0.0`, they
// also reject NaN, which must never pass a validation check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! `stemflow` — command-line laboratory for the two-compartment maturation
//! model with a state-dependent distributed lag.
//!
//! Exit codes: 0 on success, 1 when a module reports a fatal error at
//! runtime (or `verify` fails a check), 2 for configuration problems.

mod commands;
mod config;
mod ensembles;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::{build, parse_config, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "stemflow",
    version,
    about = "Integrate, classify, and verify the stem/mature-cell lag model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (sectioned key = value format).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override a setting, e.g. --set stem.m=0.45 (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides [output] dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Ensemble seed (overrides [analysis] seed).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario and write the trajectory (plus an ensemble
    /// when a seed is configured).
    Run(Common),
    /// Check the structural hypotheses and report the parameter regime.
    Classify(Common),
    /// Locate equilibria, including the positive one when it exists.
    Equilibria(Common),
    /// Run the self-checks: integrated-form residuals, convergence order,
    /// and the certified delay window. Fails with exit code 1.
    Verify(Common),
    /// Classify every cell of a parameter grid and summarize key scalars.
    Sweep(Common),
}

fn resolve(common: &Common) -> Result<ScenarioConfig, CliError> {
    let mut cfg = parse_config(&common.config)?;
    for spec in &common.set {
        cfg.apply_set(spec)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &common.out {
        cfg.dir = out.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Run(c)
        | Command::Classify(c)
        | Command::Equilibria(c)
        | Command::Verify(c)
        | Command::Sweep(c) => c,
    };
    let cfg = resolve(common)?;
    // Validate the scenario up front; sweep revalidates each cell.
    let built = build(&cfg)?;
    let hash = cfg.sha256_hex();
    match &cli.command {
        Command::Run(_) => commands::cmd_run(&cfg, &built, &hash),
        Command::Classify(_) => commands::cmd_classify(&cfg, &built, &hash),
        Command::Equilibria(_) => commands::cmd_equilibria(&cfg, &built, &hash),
        Command::Verify(_) => commands::cmd_verify(&cfg, &built, &hash),
        Command::Sweep(_) => commands::cmd_sweep(&cfg, &hash),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}
