use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddc_cli::{run_experiment, CliError, ExperimentConfig, Fixture, Mode};
use env_logger::Env;

/// Seeded data-driven consensus experiments.
#[derive(Debug, Parser)]
#[command(name = "ddc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        /// TOML config; optional when --fixture is given.
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        fixture: Option<Fixture>,
    },
}

fn load(config: Option<PathBuf>, seed: Option<u64>, out: Option<PathBuf>, mode: Option<Mode>, fixture: Option<Fixture>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None if fixture.is_some() => ExperimentConfig::default(),
        None => return Err(CliError::Config("either a config file or --fixture is required".into())),
    };
    if fixture.is_some() {
        cfg.fixture = fixture;
    }
    if seed.is_some() {
        cfg.seed = seed;
    }
    if mode.is_some() {
        cfg.mode = mode;
    }
    if out.is_some() {
        cfg.output = out;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("DDC_LOG", "warn")).init();
    let Command::Run { config, seed, out, mode, fixture } = Cli::parse().command;
    let result = load(config, seed, out, mode, fixture).and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok(report) => {
            println!("{}", serde_json::to_string(&report.status).expect("status serializes"));
            ExitCode::from(report.status.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
