//! Operator command surface: `generate`, `check`, and
//! `eval intrinsic|forecast|build-train`.

mod commands;
mod config;
mod io;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { message: message.into(), exit_code: 2 }
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Self { message: message.into(), exit_code: 3 }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self { message: message.into(), exit_code: 1 }
    }
}

#[derive(Parser)]
#[command(name = "colloquy", version, about = "Grounded EMS dialogue synthesis and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the plan -> generate -> refine pipeline over a record stream.
    Generate(GenerateArgs),
    /// Audit a dialogue corpus against its source records (concept + flow).
    Check(CheckArgs),
    /// Evaluation harnesses.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Intrinsic quality: Self-BLEU, corpus stats, LLM judges, MRR.
    Intrinsic(IntrinsicArgs),
    /// Turn-by-turn diagnosis prediction metrics.
    Forecast(ForecastArgs),
    /// Build fine-tuning examples (static or dynamic unrolling).
    BuildTrain(BuildTrainArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Newline-delimited record documents.
    #[arg(long)]
    records: PathBuf,
    /// Output dialogue corpus (newline-delimited JSON).
    #[arg(long)]
    out: PathBuf,
    /// Run configuration (YAML).
    #[arg(long)]
    config: PathBuf,
    /// Rejected-record trace stream (default: <out>.rejects.jsonl).
    #[arg(long)]
    rejects: Option<PathBuf>,
    /// Full trace stream for every record (default: <out>.traces.jsonl).
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct CheckArgs {
    /// Dialogue corpus to audit.
    #[arg(long)]
    corpus: PathBuf,
    /// Source records the corpus was generated from.
    #[arg(long)]
    records: PathBuf,
    /// Optional run configuration (lexicon, ontology, embedder).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Check report (JSON). Defaults to stdout summary only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct IntrinsicArgs {
    /// Dialogue corpus; repeat the flag for comparative ranking.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    /// Compute corpus Self-BLEU.
    #[arg(long)]
    self_bleu: bool,
    /// Compute corpus statistics.
    #[arg(long)]
    stats: bool,
    /// Judge metrics to run (comma-separated:
    /// logic,ranking,realism,safety,role,groundedness).
    #[arg(long, value_delimiter = ',')]
    judge: Vec<String>,
    /// Source records (required for groundedness judging).
    #[arg(long)]
    records: Option<PathBuf>,
    /// Newline-delimited judgment log output.
    #[arg(long)]
    judge_log: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report output (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct ForecastArgs {
    /// Newline-delimited prediction trajectories.
    #[arg(long)]
    trajectories: PathBuf,
    /// Newline-delimited {dialogue_id, labels} ground truth.
    #[arg(long)]
    labels: PathBuf,
    /// Commit threshold.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Report output (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BuildTrainArgs {
    /// Labeled dialogue corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// static = one example per transcript; dynamic = K nested prefixes.
    #[arg(long, value_parser = ["static", "dynamic"])]
    mode: String,
    /// Prefix count for dynamic unrolling.
    #[arg(long, default_value_t = 5)]
    k: u32,
    /// Training examples output (newline-delimited JSON).
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Check(args) => commands::check::run(args),
        Command::Eval(EvalCommand::Intrinsic(args)) => commands::eval_intrinsic::run(args),
        Command::Eval(EvalCommand::Forecast(args)) => commands::eval_forecast::run(args),
        Command::Eval(EvalCommand::BuildTrain(args)) => commands::build_train::run(args),
    };
    match result {
        Ok(exit_code) => std::process::exit(exit_code),
        Err(err) => {
            eprintln!("error: {}", err.message);
            std::process::exit(err.exit_code);
        }
    }
}
