use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use monograd::error::Result;
use monograd::experiment::{
    cmd_attack_eval, cmd_audit, cmd_group, cmd_sphere, cmd_synth, cmd_train, sphere_csv, ExperimentConfig,
};

#[derive(Parser, Debug)]
#[command(name = "monograd", version, about = "Monotonicity-penalised training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train and audit every configured penalty variant.
    Train(Common),
    /// Compare a plain and a group-monotone sliced classifier.
    Group(Common),
    /// Analytic and Monte-Carlo tail probabilities in the unit ball.
    Sphere(Common),
    /// Audit a saved model on the configured data.
    Audit(WithModel),
    /// Write the synthetic dataset as CSV files plus a manifest.
    Synth(Common),
    /// Attack a saved classifier with PGD and score detection.
    AttackEval(WithModel),
}

#[derive(Args, Debug)]
struct Common {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args, Debug)]
struct WithModel {
    #[command(flatten)]
    common: Common,
    /// Saved model file; overrides `audit.model`.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(repeats) = self.repeats {
            cfg.repeats = repeats;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl WithModel {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = self.common.resolve()?;
        if let Some(model) = &self.model {
            cfg.audit.model = Some(model.clone());
        }
        Ok(cfg)
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train(c) => Ok(cmd_train(&c.resolve()?)?.table()),
        Command::Group(c) => Ok(cmd_group(&c.resolve()?)?.table()),
        Command::Sphere(c) => Ok(sphere_csv(&cmd_sphere(&c.resolve()?)?)),
        Command::Audit(c) => json(&cmd_audit(&c.resolve()?)?.report),
        Command::Synth(c) => Ok(format!("wrote {}", cmd_synth(&c.resolve()?)?.display())),
        Command::AttackEval(c) => json(&cmd_attack_eval(&c.resolve()?)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            println!("{}", text.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("monograd: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
