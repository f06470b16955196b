//! `pnet`: data generation and ingestion, training, pattern fitting,
//! explanations and the two evaluation experiments, driven by key=value
//! config files.
//!
//! Exit codes: 0 success, 1 config (including a missing stage artifact),
//! 2 data, 3 dimension, 4 binding, 5 numerical.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patternnet::Result;

use crate::config::{Config, KEYS};

#[derive(Parser)]
#[command(
    name = "pnet",
    version,
    about = "Signal-estimator explanations for small networks"
)]
#[command(after_help = config_help())]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// key = value config file (`#` comments, `include <path>`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Explanation method(s), comma separated.
    #[arg(long, global = true)]
    method: Option<String>,
    /// identity | filter | linear | two_component
    #[arg(long, global = true)]
    estimator: Option<String>,
    /// The verb's split: train.split, fit.split, rho.probe_split or
    /// degrade.split. first_half | second_half | all | START..END
    #[arg(long, global = true)]
    split: Option<String>,
    /// Output index to explain.
    #[arg(long, global = true)]
    target: Option<usize>,
    /// Any config key, repeatable: --set train.epochs=5
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Verb {
    /// Generate the linear toy set or synthetic images (toy.kind).
    Toygen,
    /// Convert IDX, a PNG class directory, or CSV (last column = label) into
    /// a normalized dataset container.
    Ingest,
    /// Train a model on a dataset.
    Train,
    /// Fit signal-estimator patterns for a model.
    Fit,
    /// Measure estimator quality rho on held-out data.
    Rho,
    /// Explain one sample with every requested method.
    Explain,
    /// Patch-degradation experiment.
    Degrade,
    /// Summarize rho and degradation results in the output directory.
    Report,
}

fn config_help() -> String {
    let mut s = String::from("Config keys:\n");
    for (k, d) in KEYS {
        s += &format!("  {k:<24} {d}\n");
    }
    s
}

fn resolve(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        cfg.set("out", &o.display().to_string())?;
    }
    if let Some(m) = &cli.method {
        cfg.set("methods", m)?;
    }
    if let Some(e) = &cli.estimator {
        cfg.set("estimator", e)?;
    }
    if let Some(t) = cli.target {
        cfg.set("explain.target", &t.to_string())?;
    }
    if let Some(s) = &cli.split {
        let key = match cli.verb {
            Verb::Train => "train.split",
            Verb::Fit => "fit.split",
            Verb::Rho => "rho.probe_split",
            Verb::Degrade => "degrade.split",
            _ => {
                return Err(patternnet::Error::Config(
                    "--split does not apply to this verb".into(),
                ))
            }
        };
        cfg.set(key, s)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = commands::Ctx::new(resolve(cli)?)?;
    let manifest = match cli.verb {
        Verb::Toygen => commands::toygen(&ctx)?,
        Verb::Ingest => commands::ingest(&ctx)?,
        Verb::Train => commands::train(&ctx)?,
        Verb::Fit => commands::fit(&ctx)?,
        Verb::Rho => commands::rho(&ctx)?,
        Verb::Explain => commands::explain(&ctx)?,
        Verb::Degrade => commands::degrade(&ctx)?,
        Verb::Report => commands::report(&ctx)?,
    };
    let path = manifest.write(&ctx.cfg)?;
    println!("manifest {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
