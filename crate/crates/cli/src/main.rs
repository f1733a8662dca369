//! `wave3`: reproducible experiments for the stochastic wave equation.
//!
//! Exit codes: 0 pass, 1 a checked property fails, 2 numerical failure,
//! 64 usage or configuration error.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Command, ExperimentConfig};
use crate::error::{CliError, EXIT_USAGE};
use crate::io::{Manifest, QuadratureManifest, MANIFEST};

#[derive(Debug, Parser)]
#[command(name = "wave3", version, about = "Verification oracles, covariance tables, simulation and regularity estimates")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Flat TOML configuration; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = "wave3-output")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; falls back to WAVE3_THREADS, then to all cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Overrides the command's acceptance tolerance.
    #[arg(long, global = true, value_name = "REAL")]
    tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Run the integral oracles and check their bounds.
    Verify,
    /// Increment-variance tables and slopes of the Gaussian case.
    Cov,
    /// Simulate fields and write binary dumps and probe series.
    Simulate,
    /// Fit Hölder exponents to the dumps of a simulate run.
    Estimate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Verify => Command::Verify,
            Cmd::Cov => Command::Cov,
            Cmd::Simulate => Command::Simulate,
            Cmd::Estimate => Command::Estimate,
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("WAVE3_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Usage(format!("WAVE3_THREADS = {v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let command = Command::from(cli.command);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.tolerance {
        cfg.tolerance = Some(t);
    }
    cfg.validate()?;
    if let Some(n) = threads(cli.threads)? {
        if n == 0 {
            return Err(CliError::Usage("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let outcome = match command {
        Command::Verify => commands::verify(&cfg, &cli.out)?,
        Command::Cov => commands::cov(&cfg, &cli.out)?,
        Command::Simulate => commands::simulate(&cfg, &cli.out)?,
        Command::Estimate => commands::estimate(&cfg, &cli.out)?,
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        tolerance: cfg.tolerance_for(command),
        quadrature: QuadratureManifest::from_config(&cfg),
        config: cfg,
        outputs: outcome.outputs,
        exit_code: outcome.exit_code,
    };
    io::write_json(&cli.out.join(MANIFEST), &manifest)?;
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("wave3: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
