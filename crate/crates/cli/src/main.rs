//! `aggnet`: simulate aggregate networks, fit latent-space cluster models to
//! them, check the closed-form moments, and export plot data.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::fit::FitArgs;
use commands::validate::Fault;
use config::RunConfig;
use error::{exit, CliError, Result};

/// Seeds are stored in TOML files, whose integers are signed 64-bit.
const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Parser)]
#[command(name = "aggnet", version, about = "Latent-space cluster models for aggregate network data")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a network from the [truth] section and write its aggregate.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides [output].dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Network seed (overrides [truth].seed).
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
        seed: Option<u64>,
    },
    /// Sample the posterior given an aggregate matrix and group sizes.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sampler seed (overrides [sampler].seed).
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
        seed: Option<u64>,
        /// Number of chains (overrides [sampler].chains).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        chains: Option<u64>,
        /// Aggregate matrix (overrides [data].aggregate).
        #[arg(long)]
        aggregate: Option<PathBuf>,
        /// Group sizes (overrides [data].sizes).
        #[arg(long)]
        sizes: Option<PathBuf>,
        /// Ground truth to store alongside the fit (overrides [data].truth).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Check the analytic moments against simulation, enumeration and quadrature.
    Validate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
        seed: u64,
        /// Break one result on purpose to exercise the failure path.
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Write plot-ready tables from a fit directory.
    ExportPlots {
        #[arg(long)]
        fit_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Histogram bins for theta.
        #[arg(long, default_value_t = 30)]
        bins: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    TableCoefficient,
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output directory (set [output].dir or pass --out)".into()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let cfg = RunConfig::load(&config, false)?;
            commands::simulate::run(&cfg, &output_dir(out, &cfg)?, seed)
        }
        Command::Fit {
            config,
            out,
            seed,
            chains,
            aggregate,
            sizes,
            truth,
        } => {
            let cfg = RunConfig::load(&config, true)?;
            let args = FitArgs {
                aggregate,
                sizes,
                truth,
                seed,
                chains: chains.map(|c| c as usize),
            };
            commands::fit::run(&cfg, &output_dir(out, &cfg)?, &args)
        }
        Command::Validate { out, seed, inject_fault } => {
            let fault = inject_fault.map(|f| match f {
                FaultArg::TableCoefficient => Fault::TableCoefficient,
            });
            commands::validate::run(&out, seed, fault)
        }
        Command::ExportPlots { fit_dir, out, bins } => commands::export::run(&fit_dir, &out, bins),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
