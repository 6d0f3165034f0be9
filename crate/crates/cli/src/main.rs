// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! `spinmem` command-line driver. Logs go to stderr one line per stage or
//! schedule segment; on failure a JSON error object is printed to stdout
//! and the exit code is 1.

mod cache;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "spinmem", version, about = "Spin-ensemble quantum memory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for independent runs.
    #[arg(long, global = true, env = "SPINMEM_WORKERS")]
    workers: Option<usize>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Calibration cache file (default: OUT/calibration_cache.json).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Frequency and coupling bins with the line summary.
    Distribution,
    /// Calibrated timing table and control schedule.
    Schedule,
    /// Single-mode storage: trajectory and channel metrics.
    Run,
    /// Multi-slot storage with the cross-talk matrix.
    Multimode,
    /// Channel metrics over the input grid.
    Metrics,
    /// Moment equations against the few-spin master equation.
    Oracle,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let workers = cli.workers.unwrap_or(1).max(1);
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    std::fs::write(cli.out.join("resolved_config.json"), config.to_json())?;
    let cache = cli.cache.clone().unwrap_or_else(|| cli.out.join("calibration_cache.json"));
    let ctx = Context { config, out: cli.out.clone(), workers, cache };
    eprintln!("spinmem {:?}: out={} workers={workers}", cli.command, cli.out.display());
    match cli.command {
        Command::Distribution => commands::distribution(&ctx),
        Command::Schedule => commands::schedule(&ctx),
        Command::Run => commands::run(&ctx),
        Command::Multimode => commands::multimode(&ctx),
        Command::Metrics => commands::metrics(&ctx),
        Command::Oracle => commands::oracle(&ctx),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", e.to_json());
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
