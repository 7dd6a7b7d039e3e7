//! Thin CLI over the library pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use osad::config::RunConfig;
use osad::pipeline;

#[derive(Parser)]
#[command(
    name = "osad",
    about = "Selective anomaly detection over linear dynamical systems",
    version
)]
struct Cli {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the data directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic bench dataset.
    Synth,
    /// Identify a model from each subject's clean series.
    Learn,
    /// Build and verify the residual design.
    Design,
    /// Stream detection: observer + CUSUM charts, alert CSV + live feed.
    Run,
    /// Score alerts against labels (plus a transfer grid for multi-subject data).
    Eval,
    /// Emit plot-ready report CSVs.
    Report,
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the effective configuration as TOML.
    Show,
}

fn run(cli: Cli) -> osad::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(dir) = cli.data_dir {
        cfg.data_dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    match cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg),
        Command::Learn => pipeline::cmd_learn(&cfg),
        Command::Design => pipeline::cmd_design(&cfg),
        Command::Run => pipeline::cmd_run(&cfg).map(|_| ()),
        Command::Eval => pipeline::cmd_eval(&cfg).map(|_| ()),
        Command::Report => pipeline::cmd_report(&cfg).map(|_| ()),
        Command::Config { action } => {
            match action {
                ConfigAction::Show => print!("{}", cfg.show()),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
