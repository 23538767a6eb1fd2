//! `vrnet`: microstructure generation, homogenization, surrogate training and
//! evaluation from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

mod commands;
mod config;
mod oracle;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(vrnet_core::Error),
    /// A stage finished but some of its checks failed.
    Failed(String),
}

impl From<vrnet_core::Error> for CliError {
    fn from(e: vrnet_core::Error) -> Self {
        match e {
            vrnet_core::Error::InvalidInput(msg) => CliError::Usage(msg),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) => 3,
            CliError::Failed(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "vrnet", version, about = "Bound-enforcing surrogates for effective conductivity")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory or file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file of flag values; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate microstructures and write grids and a manifest.
    Gen(commands::GenArgs),
    /// Solve every structure at its split's contrasts.
    Solve(commands::SolveArgs),
    /// Extract descriptors of every structure.
    Featurize(commands::DataArgs),
    /// Train a surrogate on the training split.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint or the Hill baseline.
    Eval(commands::EvalArgs),
    /// Check the solver against closed-form cases.
    Oracle(commands::OracleArgs),
    /// Merge evaluation summaries into one comparison table.
    Report(commands::ReportArgs),
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let args = config::merge_config(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => return Err(CliError::Usage(e.to_string())),
        Err(e) => {
            print!("{e}");
            return Ok(());
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let c = &cli.common;
    match cli.cmd {
        Command::Gen(a) => commands::gen(c, a),
        Command::Solve(a) => commands::solve(c, a),
        Command::Featurize(a) => commands::featurize(c, a),
        Command::Train(a) => commands::train(c, a),
        Command::Eval(a) => commands::eval(c, a),
        Command::Oracle(a) => commands::oracle(c, a),
        Command::Report(a) => commands::report(c, a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vrnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
