//! `mramc`: stray-field coupling sweeps from a TOML config.

mod commands;
mod config;
mod output;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mram_coupling::ErrorKind;

use crate::commands::Ctx;
use crate::config::RunConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DOMAIN: u8 = 4;

/// Invalid or inconsistent configuration.
#[derive(Debug)]
pub struct ConfigError(String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Unreadable or malformed input data.
#[derive(Debug)]
pub struct DataError(String);

impl DataError {
    pub fn new(msg: impl Into<String>) -> Self {
        DataError(msg.into())
    }
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "data error: {}", self.0)
    }
}

impl std::error::Error for DataError {}

#[derive(Parser)]
#[command(name = "mramc", version, about = "Stray-field coupling sweeps for STT-MRAM arrays")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for synthetic fixtures.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print the full default configuration and exit.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// FL-center intra-cell field per device size.
    Intra,
    /// 256-pattern inter-cell map at one size and pitch.
    Inter {
        #[arg(long)]
        ecd: Option<f64>,
        #[arg(long)]
        pitch: Option<f64>,
    },
    /// Coupling factor over sizes and pitches.
    Psi,
    /// Critical current, switching time and thermal stability tables.
    Metrics,
    /// Analyze R-H loop files and fit switching statistics.
    Characterize {
        /// Loop CSV files, in addition to `characterize.loops`.
        files: Vec<PathBuf>,
        /// Generate and analyze a seeded synthetic fixture set.
        #[arg(long)]
        synthetic: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.print_defaults {
        print!("{}", RunConfig::default().to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(ConfigError::new("no subcommand given (see --help)").into());
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError::new("--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let model = cfg.build()?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = Ctx {
        cfg: &cfg,
        model: &model,
        out: &out,
        seed: cli.seed,
    };
    let line = match command {
        Command::Intra => commands::intra(&ctx)?,
        Command::Inter { ecd, pitch } => commands::inter(&ctx, ecd, pitch)?,
        Command::Psi => commands::psi(&ctx)?,
        Command::Metrics => commands::metrics(&ctx)?,
        Command::Characterize { files, synthetic } => commands::characterize(&ctx, &files, synthetic)?,
    };
    println!("{line}");
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<DataError>() {
            return EXIT_DATA;
        }
        if let Some(e) = cause.downcast_ref::<mram_coupling::Error>() {
            return match e.kind() {
                ErrorKind::Parameter => EXIT_CONFIG,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Domain => EXIT_DOMAIN,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
