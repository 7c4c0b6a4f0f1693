use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpslab::{cmd_ablate_scheduler, cmd_plot, cmd_run, ExperimentConfig, Options, Result};

#[derive(Parser)]
#[command(
    name = "gpslab",
    version,
    about = "Guided path sampling experiments on Gaussian mixtures"
)]
struct Cli {
    /// Worker threads (default: one per core)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding the config and $GPSLAB_OUT
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured sampler for every seed
    Run { config: PathBuf },
    /// Compare the seven inversion schedules on the first gps run
    AblateScheduler { config: PathBuf },
    /// Render SVG plots for the trajectory CSVs in a directory
    Plot { dir: PathBuf },
}

fn dispatch(cli: Cli) -> Result<()> {
    let opts = Options {
        workers: cli.workers,
        out: cli.out,
    };
    match cli.command {
        Command::Run { config } => {
            let dir = cmd_run(&ExperimentConfig::load(&config)?, &opts)?;
            println!("wrote {}", dir.display());
        }
        Command::AblateScheduler { config } => {
            let dir = cmd_ablate_scheduler(&ExperimentConfig::load(&config)?, &opts)?;
            println!("wrote {}", dir.join("ablation.csv").display());
        }
        Command::Plot { dir } => {
            for path in cmd_plot(&dir)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
