//! Command-line driver: `ness`, `sweep`, `trajectory`, `transient` and
//! `modes` subcommands writing CSV (and optionally SVG) into an output
//! directory.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical or
//! physical failure, 4 I/O failure.

use std::ffi::OsString;
use std::fmt;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Physics(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Physics(_) => "physics",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Physics(m) | CliError::Io(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl From<clocksync::Error> for CliError {
    fn from(e: clocksync::Error) -> Self {
        match e {
            clocksync::Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Physics(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clocksync", version, about = "Synchronization of two noisy oscillator clocks through a shared cavity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON config: a file path, or inline JSON starting with `{`.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Parameter preset the config overrides are applied to.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Master seed for all random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady-state occupations, entropy rates and normal modes at one coupling.
    Ness {
        #[arg(long)]
        g_over_kappa: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the coupling and write one row of metrics per grid point.
    Sweep {
        #[arg(long)]
        grid_max: Option<f64>,
        #[arg(long)]
        grid_points: Option<usize>,
        /// analytic, monte-carlo or both.
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<clocksync::Protocol>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// One stationary trajectory: raw dump and clock spectra.
    Trajectory {
        #[arg(long)]
        g_over_kappa: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Welch segment length in samples.
        #[arg(long)]
        segment: Option<usize>,
        /// Write every n-th sample to the raw dump.
        #[arg(long)]
        dump_every: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Quench ensemble: transient correlation and entropy fluxes.
    Transient {
        #[arg(long)]
        g_over_kappa: Option<f64>,
        #[arg(long)]
        n_traj: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Normal-mode frequencies and linewidths over a coupling grid.
    Modes {
        #[arg(long)]
        grid_max: Option<f64>,
        #[arg(long)]
        grid_points: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_protocol(s: &str) -> Result<clocksync::Protocol, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown protocol `{s}` (analytic, monte-carlo, both)"))
}

/// Caps the global rayon pool at `CLOCKSYNC_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CLOCKSYNC_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CLOCKSYNC_THREADS must be a positive integer, got `{value}`")))?;
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|_| commands::execute(cli.command)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            let line = serde_json::json!({
                "error": e.kind(),
                "message": e.message(),
            });
            eprintln!("{line}");
            e.exit_code()
        }
    }
}
