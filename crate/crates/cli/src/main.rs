use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use xattn_cli::{error_class, execute, RunArgs, Verb};

#[derive(Parser)]
#[command(
    name = "xattn",
    version,
    about = "Dual-query cross-lingual attention workbench",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; omitted means all defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable). The value is parsed as JSON
    /// when possible, otherwise taken as a string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the config's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for the run directory (default: runs).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (mono, pair, mix, or parallel) plus its registry.
    GenData(Common),
    /// Train one cross-query registry entry on parallel text.
    PretrainQcross(Common),
    /// Train a model: full fine-tuning, bias-only, or masked-token pretraining.
    Train(Common),
    /// Evaluate a checkpoint on one dataset and setting.
    Eval(Common),
    /// Evaluate a checkpoint over the full in-language + zero-shot grid.
    Transfer(Common),
    /// Write per-layer, per-head attention probabilities for a few examples.
    DumpAttention(Common),
}

impl Command {
    fn into_run_args(self) -> RunArgs {
        let (verb, common) = match self {
            Command::GenData(c) => (Verb::GenData, c),
            Command::PretrainQcross(c) => (Verb::PretrainQcross, c),
            Command::Train(c) => (Verb::Train, c),
            Command::Eval(c) => (Verb::Eval, c),
            Command::Transfer(c) => (Verb::Transfer, c),
            Command::DumpAttention(c) => (Verb::DumpAttention, c),
        };
        RunArgs {
            verb,
            config: common.config,
            sets: common.set,
            seed: common.seed,
            out: common.out,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.command.into_run_args();
    match execute(&args) {
        Ok(outcome) => {
            println!(
                "{}",
                json!({
                    "status": "ok",
                    "verb": args.verb.name(),
                    "run_dir": outcome.run_dir.display().to_string(),
                    "summary": outcome.summary,
                })
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            let (class, code) = error_class(&err);
            eprintln!(
                "{}",
                json!({"error": class, "message": err.to_string()})
            );
            ExitCode::from(code)
        }
    }
}
