//! `skumap` command line.
//!
//! Settings resolve as flags, then environment, then the config file, then
//! built-in defaults. Exit codes: 0 success, 1 usage or data error, 2
//! provider or runtime failure.

mod commands;
mod setup;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use setup::{build_engine, build_providers, Runtime};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, bad input files, incompatible stores.
    Usage(String),
    /// Provider outages and other failures while doing the work.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

pub fn usage(e: impl fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn runtime(e: impl fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

pub type CliResult<T = ()> = Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "skumap", version, about = "Decide whether two product listings are the same SKU")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Config file (TOML).
    #[arg(long, global = true, env = "SKUMAP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Call live providers. Without it every model and search call is served
    /// from the stub fixtures.
    #[arg(long, global = true, env = "SKUMAP_LIVE")]
    pub live: bool,
    /// Stub script (TOML) answering model and search calls.
    #[arg(long, global = true, env = "SKUMAP_FIXTURES")]
    pub fixtures: Option<PathBuf>,
    /// Reasoning-trace store.
    #[arg(long, global = true, env = "SKUMAP_TRACES")]
    pub traces: Option<PathBuf>,
    /// Review queue file.
    #[arg(long, global = true, env = "SKUMAP_REVIEW")]
    pub review: Option<PathBuf>,
    /// Few-shot exemplars (dataset format).
    #[arg(long, global = true, env = "SKUMAP_EXEMPLARS")]
    pub exemplars: Option<PathBuf>,
    #[arg(long, global = true, env = "SKUMAP_WORKERS")]
    pub workers: Option<usize>,
    /// Traces retrieved per pair.
    #[arg(long, global = true, env = "SKUMAP_K")]
    pub k: Option<usize>,
    /// Similarity a retrieved trace needs before it is judged.
    #[arg(long, global = true, env = "SKUMAP_TAU_SIM")]
    pub tau_sim: Option<f64>,
    /// Confidence below which q2k results are queued for review.
    #[arg(long, global = true, env = "SKUMAP_THETA")]
    pub theta: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map one pair of titles.
    Match(MatchArgs),
    /// Run one or more modes over a labeled dataset and write reports.
    Eval(EvalArgs),
    /// Inspect or move the trace store.
    Traces {
        #[command(subcommand)]
        action: TracesCmd,
    },
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write a synthetic labeled dataset and the stub script that goes with it.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub base: String,
    #[arg(long)]
    pub compared: String,
    #[arg(long, default_value = "q2k")]
    pub mode: String,
    /// `text` for people, `record` for one JSON line.
    #[arg(long, default_value = "text")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Mode to run; repeat for several, or `all`.
    #[arg(long = "mode", default_value = "q2k")]
    pub modes: Vec<String>,
    /// Output directory for reports and run logs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TracesCmd {
    /// Print the top-k traces for a query.
    Search {
        #[arg(long, short)]
        q: String,
        #[arg(long, default_value_t = skumap_core::traces::DEFAULT_K)]
        top: usize,
    },
    /// Copy the store and its sidecar to another path.
    Export {
        #[arg(long)]
        to: PathBuf,
    },
    /// Load a store file into an empty store at the configured path.
    Import {
        #[arg(long)]
        from: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SKUMAP_BIND")]
    pub bind: Option<String>,
    #[arg(long, env = "SKUMAP_PORT")]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    /// Fraction of dataset labels to flip.
    #[arg(long, default_value_t = 0.0)]
    pub label_noise: f64,
    /// Directory receiving dataset.tsv and fixtures.toml.
    #[arg(long)]
    pub out: PathBuf,
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("SKUMAP_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parse `args` and run the command; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging();
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
