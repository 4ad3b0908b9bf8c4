//! Command-line driver: derived constants, metric tables, coupled ensembles,
//! verification suites, and the kinetic-scaling scan, sharing one flat JSON
//! configuration schema.
//!
//! Exit codes: 0 success, 1 verification failure or runtime error, 2 configuration
//! error (the message names the offending key).

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kinetic_coupler_core::Error;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(msg) => write!(f, "{msg}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(
                Error::Config(_)
                | Error::InconsistentParameters(_)
                | Error::DimensionMismatch { .. },
            ) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "kinetic-coupler",
    version,
    about = "Contraction-rate toolkit for kinetic Langevin dynamics"
)]
struct Cli {
    /// Seed for randomized commands; overrides the config key (which defaults to 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the derived constant set as aligned text and optionally CSV.
    Rates {
        #[arg(long)]
        config: PathBuf,
        /// Refine the closed-form rate by bisection up to the admissibility ceiling.
        #[arg(long)]
        optimized: bool,
        /// Also write the `name,value` CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the concave distance-transform table as CSV.
    Metric {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a coupled ensemble, audit the decay against the proven bound, emit CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also record the first pair's trajectory to this CSV.
        #[arg(long)]
        pair_out: Option<PathBuf>,
    },
    /// Run an invariant suite; exits 0 only if every check passes.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
    },
    /// Scan the double-well separation a at fixed gamma*a and emit the rate table.
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// Name of the swept parameter; only `a` is supported.
        #[arg(long)]
        param: String,
        /// Comma-separated list of values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Lyapunov,
    Metric,
    Kcheck,
    Assumptions,
    All,
}

fn main() -> ExitCode {
    if let Err(msg) = init_thread_pool() {
        eprintln!("{msg}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// `KINETIC_COUPLER_THREADS` caps the worker count; unset means hardware
/// parallelism. Must run before any rayon pool is touched.
fn init_thread_pool() -> Result<(), String> {
    let raw = match std::env::var("KINETIC_COUPLER_THREADS") {
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => {
            return Err(format!("configuration error: KINETIC_COUPLER_THREADS is not readable: {e}"))
        }
        Ok(raw) => raw,
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        format!("configuration error: KINETIC_COUPLER_THREADS must be a positive integer, got {raw:?}")
    })?;
    if n == 0 {
        return Err("configuration error: KINETIC_COUPLER_THREADS must be >= 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("configuration error: cannot size the thread pool: {e}"))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Rates { config, optimized, out } => {
            commands::rates(&config, optimized, out.as_deref())
        }
        Command::Metric { config, out } => commands::metric(&config, &out),
        Command::Simulate { config, out, pair_out } => {
            commands::simulate(&config, &out, pair_out.as_deref(), cli.seed)
        }
        Command::Verify { config, suite } => commands::verify(&config, suite, cli.seed),
        Command::Scan { config, param, values, out } => {
            commands::scan(&config, &param, &values, &out, cli.seed)
        }
    }
}
