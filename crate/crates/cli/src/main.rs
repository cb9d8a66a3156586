//! `kspp`: simulation, estimation and verification runs for the smoothed
//! Keller-Segel particle system.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 integration blow-up (partial artifacts are still written).

mod artifacts;
mod commands;
mod kernel_audit;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Blowup(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Verification(_) | Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Blowup(_) => 3,
        }
    }
}

impl From<kspp_core::Error> for Failure {
    fn from(e: kspp_core::Error) -> Self {
        use kspp_core::Error;
        match e {
            Error::Config(m) | Error::Domain(m) => Failure::Config(m),
            Error::Format(_) => Failure::Config(e.to_string()),
            Error::Blowup { .. } => Failure::Blowup(e.to_string()),
            Error::Io(_) => Failure::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "kspp", version, about = "Smoothed Keller-Segel particle system toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the config-driven commands.
#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` configuration file; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the particle system and write trajectories.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the binary trajectory file.
        #[arg(long)]
        binary: bool,
    },
    /// Moment functionals, optionally with the drift-domination and Hölder checks.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// Binary trajectory file to read instead of simulating.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Run the drift-domination and Hölder-modulus checks as well.
        #[arg(long)]
        checks: bool,
    },
    /// Sensitivity threshold chi* for one (theta, p).
    Threshold {
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 60)]
        grid: usize,
        #[arg(long, default_value_t = 4)]
        rounds: usize,
        #[arg(long, default_value_t = 1e-4)]
        margin: f64,
        /// Also write every evaluated (gamma, alpha) point.
        #[arg(long)]
        audit: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Recompute the reference threshold values beside their bounds.
    ThresholdTable {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Random sweep of the weighted integral inequality plus extremal and tightness checks.
    VerifyInequality {
        #[arg(long, default_value_t = 10_000)]
        cases: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Finite-difference, envelope and normalisation checks of the kernels.
    VerifyKernels {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Martingale-problem residual at one or more particle counts.
    MartingaleTest {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated particle counts; defaults to the config value.
        #[arg(long)]
        n_list: Option<String>,
    },
    /// E1 and E4 across smoothing parameters with shared noise.
    EpsilonStudy {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "0.1,0.05,0.025")]
        eps: String,
        /// Largest accepted ratio between the extreme E4 values.
        #[arg(long, default_value_t = 2.0)]
        max_spread: f64,
    },
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(value) = std::env::var("KSPP_THREADS") {
        let n: usize = value.parse().map_err(|_| Failure::Config(format!("KSPP_THREADS: cannot parse `{value}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|_| commands::dispatch(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kspp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
