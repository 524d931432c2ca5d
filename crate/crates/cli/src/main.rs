//! `relgrade`: essay relevance grading experiments from the command line.

mod commands;
mod data;
mod options;
mod report;

use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{crosstask, encode, eval, fewshot, finetune};

#[derive(Debug, Parser)]
#[command(name = "relgrade", version, about = "Nearest-centroid relevance grading of essays over dense embeddings")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embed essays (and prompts) with the hashing test encoder or a remote encoder.
    EncodeTest(encode::EncodeArgs),
    /// Fit a centroid model per task.
    Fit(eval::FitArgs),
    /// Score essays with a saved model.
    Score(eval::ScoreArgs),
    /// Cross-validated evaluation of the centroid model.
    Eval(eval::EvalArgs),
    /// Fine-tune an adapter per fold, optionally sweeping hyper-parameters.
    Finetune(finetune::FinetuneArgs),
    /// Score each target task with centroids from the other tasks.
    Crosstask(crosstask::CrossTaskArgs),
    /// k-shot evaluation with nested training subsets.
    Fewshot(fewshot::FewShotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::EncodeTest(a) => encode::run(a),
        Command::Fit(a) => eval::fit(a),
        Command::Score(a) => eval::score(a),
        Command::Eval(a) => eval::eval(a),
        Command::Finetune(a) => finetune::run(a),
        Command::Crosstask(a) => crosstask::run(a),
        Command::Fewshot(a) => fewshot::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
