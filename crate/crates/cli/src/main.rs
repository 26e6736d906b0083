use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::Settings;
use error::{CliError, CliResult};

/// Crowd counting with recurrent spatial-aware density refinement.
#[derive(Parser, Debug)]
#[command(name = "drsan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset (PGM images + annotations.json)
    GenData,
    /// Train a model; writes model.drsn, train.log and run.cfg
    Train,
    /// Evaluate a checkpoint and report MAE/MSE
    Eval,
    /// Write density maps (CSV + PGM) and print counts
    Predict,
    /// Finite-difference gradient checks
    Gradcheck,
    /// Mode / refinement-step / context ablation grid
    Ablate,
}

#[derive(Args, Debug)]
struct Flags {
    /// settings file of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// refinement steps
    #[arg(long, global = true)]
    n: Option<usize>,
    /// t | ts | tsr | raw
    #[arg(long, global = true)]
    mode: Option<String>,
    /// on | off
    #[arg(long, global = true)]
    context: Option<String>,
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// dataset directory, annotations.json, or (predict) a PGM image
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

impl Flags {
    fn settings(&self) -> CliResult<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let text_flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("n", self.n.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("context", self.context.clone()),
            ("iters", self.iters.map(|v| v.to_string())),
        ];
        for (key, value) in text_flags {
            if let Some(v) = value {
                s.set(key, &v).map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
            }
        }
        if let Some(p) = &self.out {
            s.out = Some(p.clone());
        }
        if let Some(p) = &self.data {
            s.data = Some(p.clone());
        }
        if let Some(p) = &self.checkpoint {
            s.checkpoint = Some(p.clone());
        }
        Ok(s)
    }
}

fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("DRSAN_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("DRSAN_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let s = cli.flags.settings()?;
    match cli.command {
        Command::GenData => commands::gen_data(&s),
        Command::Train => commands::train(&s),
        Command::Eval => commands::eval(&s),
        Command::Predict => commands::predict(&s),
        Command::Gradcheck => commands::gradcheck(&s),
        Command::Ablate => commands::ablate(&s),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
