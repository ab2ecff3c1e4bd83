//! Command-line front end for the backward heat reconstruction library:
//! single runs, parameter sweeps, an invariant verification suite and data
//! generation. Exit codes: 0 success, 1 check or bound failure,
//! 2 configuration error.

mod config;
mod data;
mod gencmd;
mod solve;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "backheat",
    version,
    about = "Reconstructs the initial heat profile from the final one by an averaged fixed-point iteration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one reconstruction and write its trace and solution.
    Solve(SolveArgs),
    /// Run one trial per (eps, seed) and fit rates over the results.
    Sweep(SweepArgs),
    /// Run the named invariant checks end to end.
    Verify(VerifyArgs),
    /// Emit a generated data file.
    Gen(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set problem.gamma=1.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Acknowledge invoking the exact backward inversion where it may
    /// overflow.
    #[arg(long)]
    allow_oracle: bool,
    /// Replace the data seed and the noise seed list with this seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Built-in scenario (classic-single-mode); used instead of --config.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Worker threads for independent trials.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Internal test hook: inject a deliberate fault into the check harness.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn load_config(common: &CommonArgs, scenario: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, scenario) {
        (Some(path), None) => config::load(path, &common.set)?,
        (None, Some(name)) => config::apply_overrides_to(&config::scenario(name)?, &common.set)?,
        (Some(_), Some(_)) => bail!("--config and --scenario are mutually exclusive"),
        (None, None) => bail!("either --config or --scenario is required"),
    };
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.data.seed = seed;
        cfg.noise.seeds = vec![seed];
    }
    Ok(cfg)
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => {
            let cfg = load_config(&args.common, args.scenario.as_deref())?;
            solve::cmd_solve(&cfg, args.common.allow_oracle)
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args.common, None)?;
            sweep::cmd_sweep(&cfg, args.parallel)
        }
        Command::Verify(args) => {
            let fault = args
                .inject_fault
                .as_deref()
                .map(verify::parse_fault)
                .transpose()?;
            verify::cmd_verify(fault)
        }
        Command::Gen(common) => {
            let cfg = load_config(&common, None)?;
            gencmd::cmd_gen(&cfg, common.allow_oracle)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
