//! The `pairsim` command line.
//!
//! Data goes to stdout or `--out`; diagnostics go to stderr. Exit codes:
//! 0 success, 1 runtime failure (including failed checks and audits),
//! 2 usage error, 3 `chsh` found no violation (S at most 2 + 1e-9).

pub mod commands;
pub mod config;
pub mod nosignal;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{CliConfig, CommonArgs, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_VIOLATION: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pairsim_core::Error),
    #[error(transparent)]
    Harness(#[from] pairsim_harness::HarnessError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    pub fn exit_code(&self) -> i32 {
        use pairsim_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(
                E::UnknownFamily(_)
                | E::Pairing { .. }
                | E::NoAngle(_)
                | E::Config(_)
                | E::WrongSide { .. },
            ) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pairsim",
    version,
    about = "Entangled-pair probabilities, CHSH tests and no-signaling sessions"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Joint probabilities over a range of relative angles.
    Scan,
    /// Quantum and local-hidden-variable CHSH values.
    Chsh {
        /// a,a',b,b' (radians unless --degrees). Defaults to 0,π/2,π/4,3π/4.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        settings: Option<Vec<f64>>,
    },
    /// Seeded coincidence events with A at 0 and B at --omega.
    Events {
        /// Pass value of A's filter: L/R for chiral (default L), 0/1 for
        /// crypto (default 0).
        #[arg(long)]
        pass_a: Option<String>,
        /// Pass value of B's filter, as for --pass-a.
        #[arg(long)]
        pass_b: Option<String>,
    },
    /// Source and two detector processes talking over loopback sockets,
    /// followed by a transcript audit.
    Nosignal {
        /// A's setting angles (default 0,π/2).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        settings_a: Option<Vec<f64>>,
        /// B's setting angles (default π/4,3π/4).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        settings_b: Option<Vec<f64>>,
        /// Make the source relay one of A's messages to B.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Run the invariant suite.
    Validate,
    #[command(hide = true)]
    Source {
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        settings_a: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        settings_b: Vec<f64>,
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        inject_fault: bool,
        #[arg(long, default_value_t = 5000)]
        handshake_timeout_ms: u64,
        #[arg(long, default_value_t = 30000)]
        trial_timeout_ms: u64,
    },
    #[command(hide = true)]
    Detector {
        #[arg(long)]
        connect: std::net::SocketAddr,
        #[arg(long)]
        side: String,
        #[arg(long)]
        settings_count: usize,
        #[arg(long)]
        uniform: bool,
        #[arg(long)]
        local_seed: u64,
        /// Local log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    let cfg = CliConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Scan => commands::scan(&cfg),
        Command::Chsh { settings } => commands::chsh(&cfg, settings.as_deref()),
        Command::Events { pass_a, pass_b } => {
            commands::events(&cfg, pass_a.as_deref(), pass_b.as_deref())
        }
        Command::Nosignal {
            settings_a,
            settings_b,
            inject_fault,
        } => nosignal::orchestrate(
            &cfg,
            settings_a.as_deref(),
            settings_b.as_deref(),
            inject_fault,
        ),
        Command::Validate => commands::validate(&cfg),
        Command::Source {
            listen,
            settings_a,
            settings_b,
            transcript,
            inject_fault,
            handshake_timeout_ms,
            trial_timeout_ms,
        } => nosignal::source(
            &cfg,
            &listen,
            &settings_a,
            &settings_b,
            &transcript,
            inject_fault,
            (handshake_timeout_ms, trial_timeout_ms),
        ),
        Command::Detector {
            connect,
            side,
            settings_count,
            uniform,
            local_seed,
            log,
        } => nosignal::detector(
            &cfg,
            connect,
            &side,
            settings_count,
            uniform,
            local_seed,
            log.as_deref(),
        ),
    }
}
