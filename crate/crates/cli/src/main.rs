use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use popinv_cli::commands;
use popinv_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "popinv",
    version,
    about = "Forward runs and parameter recovery for a nonlocal selection model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise seed, overrides `noise.seed`
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Do not list written files
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the forward problem; write rho, R and density snapshots
    Forward,
    /// Write noisy population data and critical points
    MakeData,
    /// Recover p from population data with IRGN
    Invert,
    /// Pointwise recovery of p' or d' from critical points
    ReconCritical,
    /// IRGN over a list of noise levels, with a fitted rate
    Sweep,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config {
        key: String::new(),
        reason: "missing --config".into(),
    })?;
    let cfg = commands::with_overrides(ExperimentConfig::load(path)?, cli.out.clone(), cli.seed);
    match cli.command {
        Command::Forward => commands::run_forward(&cfg),
        Command::MakeData => commands::run_make_data(&cfg),
        Command::Invert => commands::run_invert(&cfg),
        Command::ReconCritical => commands::run_recon_critical(&cfg),
        Command::Sweep => commands::run_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            if !cli.quiet {
                for f in files {
                    println!("{}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("popinv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
