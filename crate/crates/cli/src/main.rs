//! `vigil` — sequential safety-surveillance experiments from the command
//! line: simulate populations, calibrate critical values, run the method
//! sweep, calibrate thresholds and render reports.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "vigil", version, about = "Sequential safety surveillance on simulated data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a population (and control outcomes, if configured) to CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the config's `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Calibrate and cache a MaxSPRT critical value for the configured
    /// surveillance schedule.
    Cv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the configured analysis: a single simulated dataset or one of
    /// the experiment modes (e1, e2, e3).
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Directory with `simulate` outputs (single mode only).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Skip sweep seeds already present in the output.
        #[arg(long)]
        resume: bool,
    },
    /// Pick the decision threshold whose end-of-analysis Type 1 error
    /// matches a target, from stored sweep results.
    Calibrate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        target_type1: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate results into the metric table and render SVG figures.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional analysis config (supplies the threshold grid).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// CLI failure categories, mapped to exit codes: configuration errors
/// exit 1, I/O errors exit 2, anything else exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<vigil_core::Error> for CliError {
    fn from(e: vigil_core::Error) -> Self {
        match e {
            vigil_core::Error::InvalidConfig(m) | vigil_core::Error::Parse(m) => {
                CliError::Config(m)
            }
            vigil_core::Error::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
            CliError::Io(format!("{e:#}"))
        } else {
            CliError::Internal(format!("{e:#}"))
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(&config, &out, seed),
        Command::Cv { config, out, seed } => commands::cv(&config, &out, seed),
        Command::Analyze { config, data, out, seed, jobs, resume } => {
            if let Some(jobs) = jobs {
                // ignore failure: the global pool may already exist
                let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
            }
            commands::analyze(&config, data.as_deref(), &out, seed, resume)
        }
        Command::Calibrate { results, target_type1, out } => {
            commands::calibrate(&results, target_type1, &out)
        }
        Command::Report { results, out, config } => {
            commands::report(&results, &out, config.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vigil: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
