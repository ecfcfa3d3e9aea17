mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Evolve, evaluate and apply channel-scoring functions for network pruning.
#[derive(Parser)]
#[command(name = "prunevolve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve scoring functions on the tasks of a run configuration.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the newest checkpoint in `out`.
        #[arg(long)]
        resume: bool,
        /// Parallel fitness evaluations; results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print `task_id fitness` for one function on one task.
    EvalFn {
        function: PathBuf,
        task: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Apply a function to a pruning or feature-selection task and write the
    /// results.
    Prune {
        function: PathBuf,
        task: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// The built-in function library.
    Soap {
        #[command(subcommand)]
        action: SoapAction,
    },
    /// Short evolutions over a grid of task weights and combination schemes,
    /// scored on the held-out task.
    AlphaGrid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Quick internal consistency checks.
    Selftest,
}

#[derive(Subcommand)]
enum SoapAction {
    /// Print the library function names.
    List,
    /// Write one `.fn` file per library function.
    Export { dir: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("function error: {0}")]
    Function(String),
    #[error("task error: {0}")]
    Task(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Function(_) => 3,
            CliError::Task(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }
}

/// `PRUNEVOLVE_SEED`, when set.
fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("PRUNEVOLVE_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| CliError::Config(format!("PRUNEVOLVE_SEED={v:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = env_seed()?;
    match cli.command {
        Command::Evolve {
            config,
            out,
            resume,
            workers,
        } => commands::evolve(&config, &out, resume, workers, seed),
        Command::EvalFn {
            function,
            task,
            seed: s,
        } => commands::eval_fn(&function, &task, s.or(seed).unwrap_or(0)),
        Command::Prune {
            function,
            task,
            out,
            seed: s,
        } => commands::prune(&function, &task, &out, s.or(seed).unwrap_or(0)),
        Command::Soap { action } => match action {
            SoapAction::List => commands::soap_list(),
            SoapAction::Export { dir } => commands::soap_export(&dir),
        },
        Command::AlphaGrid {
            config,
            out,
            workers,
        } => commands::alpha_grid(&config, &out, workers, seed),
        Command::Selftest => commands::selftest(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prunevolve: {e}");
            ExitCode::from(e.code())
        }
    }
}
