//! Thin command-line front end over the `hbubble` library: loads a config
//! file, applies the few global flag overrides, and dispatches to the
//! corresponding `cli::cmd_*` driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hbubble::cli::{
    cmd_gamma_scan, cmd_multiplicity, cmd_reduce, cmd_solve, cmd_validate, RunConfig, Scenario,
};

#[derive(Parser)]
#[command(
    name = "hbubble",
    about = "Spectral laboratory for sphere-type surfaces with prescribed mean curvature",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for scans (overrides the config).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Verbose logging.
    #[arg(long, global = true)]
    verbose: bool,

    /// Scenario for the multiplicity command (overrides the config).
    #[arg(long, global = true)]
    scenario: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the unperturbed verification suite.
    Validate,
    /// Scan the landscape function over the configured box.
    GammaScan,
    /// Solve the correction at one point and tabulate the expansion.
    Reduce,
    /// Search critical points of the reduced functional and export bubbles.
    Solve,
    /// Run a shipped scenario end to end and report the bubble count.
    Multiplicity,
}

fn run(cli: Cli) -> hbubble::Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cli.verbose {
        cfg.verbose = true;
    }
    if let Some(name) = &cli.scenario {
        cfg.scenario = Some(Scenario::from_name(name)?);
    }

    match cli.command {
        Command::Validate => Ok(cmd_validate(&cfg)?.passed()),
        Command::GammaScan => Ok(cmd_gamma_scan(&cfg)?.passed()),
        Command::Reduce => Ok(cmd_reduce(&cfg)?.passed()),
        Command::Solve => Ok(cmd_solve(&cfg)?.passed()),
        Command::Multiplicity => {
            let scenario = cfg.scenario.ok_or_else(|| {
                hbubble::Error::InvalidParameter(
                    "multiplicity needs a scenario (config key or --scenario)".into(),
                )
            })?;
            Ok(cmd_multiplicity(&cfg, scenario)?.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
