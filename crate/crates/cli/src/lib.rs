//! `cpr`: one binary, one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 validation error (bad config, missing inputs),
//! 2 runtime error, 64 usage error.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{error::ErrorKind, Parser, Subcommand};

static QUIET: AtomicBool = AtomicBool::new(false);

fn quiet() -> bool {
    QUIET.load(Ordering::Relaxed)
}

/// `println!` unless `--quiet` was given.
macro_rules! say {
    ($($arg:tt)*) => {
        if !$crate::quiet() {
            println!($($arg)*);
        }
    };
}

pub mod commands;
pub mod config;

use commands::*;
use config::AppConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cpr", version, about = "Composed pose retrieval toolkit")]
pub struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Suppress summaries on stdout and informational logging.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate pose-transition descriptions with a chat-completion endpoint.
    Annotate(AnnotateArgs),
    /// Split a description corpus into environment-free and environment-bound items.
    FilterEnv(FilterEnvArgs),
    /// Select frame pairs from keypoint sequences.
    Pairs(PairsArgs),
    /// Encode each line of a text file with the hashing text encoder.
    Embed(EmbedArgs),
    /// Train the text encoder or the combiner.
    Train(TrainArgs),
    /// Recall@k on the test split.
    Eval(EvalArgs),
    /// Train and evaluate the full model next to single-factor ablations.
    Ablate(AblateArgs),
    /// Token frequency table per description corpus.
    Stats(StatsArgs),
    /// Serve a scripted chat-completion endpoint until interrupted.
    MockMllm(MockArgs),
    /// Write a synthetic retrieval world with its oracle checkpoint.
    Synth(SynthArgs),
    /// Write the small annotation fixture and its mock script.
    Fixture(FixtureArgs),
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    QUIET.store(cli.quiet, Ordering::Relaxed);
    let level = if cli.quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    match cli.command {
        Command::Annotate(a) => annotate(a, &file),
        Command::FilterEnv(a) => filter_env(a, &file),
        Command::Pairs(a) => pairs(a, &file),
        Command::Embed(a) => embed(a, &file),
        Command::Train(a) => train(a, &file),
        Command::Eval(a) => eval(a, &file),
        Command::Ablate(a) => ablate(a, &file),
        Command::Stats(a) => stats(a),
        Command::MockMllm(a) => mock_mllm(a),
        Command::Synth(a) => synth(a),
        Command::Fixture(a) => fixture(a),
    }
}
