//! `tnid`: prepare datasets, train tensor network regressors, decompose
//! them by interaction degree and aggregate multi-seed results.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;
use tnid_core::ModelKind;

#[derive(Parser, Debug)]
#[command(name = "tnid", version, about = "Tensor network interaction decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, resample and cache the train and test splits.
    Prepare(Common),
    /// Train one model per seed; writes checkpoints, logs and run summaries.
    Train(Common),
    /// Per-degree magnitudes and accuracies of trained checkpoints.
    Decompose(DecomposeArgs),
    /// Aggregate run summaries into mean(standard error) tables.
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed to run (repeatable); replaces the configured seed list.
    #[arg(long = "seed", value_name = "N")]
    seeds: Vec<u64>,
    #[arg(long, value_parser = ["mnist", "fashion"])]
    dataset: Option<String>,
    #[arg(long, value_parser = ["tr", "ttn"])]
    kind: Option<String>,
    /// Bond dimension.
    #[arg(long, value_name = "R")]
    bond: Option<usize>,
    /// Degree set: full, cum:J, deg:J or a comma-separated list.
    #[arg(long, value_name = "SPEC")]
    degrees: Option<String>,
    /// Output (run) directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Any other configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    #[command(flatten)]
    common: Common,
    /// Decompose this checkpoint instead of the configured runs.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Highest degree to report (default: the feature count).
    #[arg(long = "j-max", value_name = "N")]
    j_max: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(d) = &self.dataset {
            cfg.set("dataset", d)?;
        }
        if let Some(k) = &self.kind {
            cfg.set("kind", k)?;
        }
        if let Some(b) = self.bond {
            cfg.bond = b;
        }
        if let Some(d) = &self.degrees {
            cfg.degrees = d.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare(c) => commands::prepare(&c.resolve()?),
        Command::Train(c) => commands::train(&c.resolve()?),
        Command::Decompose(d) => {
            let mut cfg = d.common.resolve()?;
            if let Some(j) = d.j_max {
                cfg.j_max = Some(j);
            }
            commands::decompose(&cfg, d.checkpoint)
        }
        Command::Report(c) => {
            let cfg = c.resolve()?;
            let kind = c
                .kind
                .as_deref()
                .map(|k| k.parse::<ModelKind>())
                .transpose()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            commands::report(&cfg, c.dataset.as_deref(), kind)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tnid: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
