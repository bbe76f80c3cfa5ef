//! `dante`: run, sweep and verify DANTE experiments.

mod run;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{Experiment, Settings};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "dante", version, about = "Double-loop solver for hierarchical variational inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run; writes trace.csv and summary.txt.
    Run {
        experiment: Option<Experiment>,
        /// Flat TOML file with the same keys as the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Cartesian grid of runs, one subdirectory each plus index.csv.
    Sweep {
        experiment: Option<Experiment>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid_alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        grid_encoding: Vec<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid_b: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        grid_seed: Vec<u64>,
        /// Cells run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        settings: Settings,
    },
    /// Runs the acceptance checks and prints a pass/fail table.
    Verify,
}

fn resolve(
    experiment: Option<Experiment>,
    config: Option<PathBuf>,
    flags: Settings,
) -> Result<(Experiment, Settings), CliError> {
    let base = match config {
        Some(p) => settings::read_config(&p)?,
        None => Settings::default(),
    };
    let mut merged = base.overlay(&flags);
    if experiment.is_some() {
        merged.experiment = experiment;
    }
    let exp = merged.experiment.ok_or_else(|| {
        CliError::Config("no experiment given (argument or `experiment` key)".into())
    })?;
    Ok((exp, merged))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            experiment,
            config,
            settings,
        } => resolve(experiment, config, settings)
            .and_then(|(exp, s)| run::cmd_run(exp, &s).map(|_| ())),
        Command::Sweep {
            experiment,
            config,
            grid_alpha,
            grid_encoding,
            grid_b,
            grid_seed,
            jobs,
            settings,
        } => resolve(experiment, config, settings).and_then(|(exp, s)| {
            let grid = run::Grid {
                alpha: grid_alpha,
                encoding: grid_encoding,
                b: grid_b,
                seed: grid_seed,
            };
            run::cmd_sweep(exp, &s, &grid, jobs)
        }),
        Command::Verify => return run::cmd_verify(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
