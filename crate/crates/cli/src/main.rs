use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::CommonArgs;

#[derive(Debug, Parser)]
#[command(name = "stance", version, about = "Multi-perspective stance classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApproachArg {
    Baseline,
    #[value(alias = "multi")]
    MultiPerspective,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and preprocess a corpus; writes the cleaned corpus as JSON-lines.
    Ingest(CommonArgs),
    /// Inter-annotator agreement and label distributions.
    Stats(CommonArgs),
    /// Seeded train/validation/test split into an output directory.
    Split(CommonArgs),
    /// Emit a baseline or multi-perspective training set.
    Build {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "baseline")]
        approach: ApproachArg,
    },
    /// Emit the chunks of every document.
    Chunk(CommonArgs),
    /// Train the native classifier on a training corpus.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "baseline")]
        approach: ApproachArg,
    },
    /// Predict with a trained model or import external predictions.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Model file written by `train`.
        #[arg(long)]
        model: Option<std::path::PathBuf>,
        /// Gold corpus to score the predictions against.
        #[arg(long)]
        eval: Option<std::path::PathBuf>,
    },
    /// Score a predictions file (`--external-preds`) against a gold corpus (`--input`).
    Eval(CommonArgs),
    /// Run the full baseline / multi-perspective x chunking grid.
    Experiment(CommonArgs),
}

fn main() -> ExitCode {
    // Fixed level: all run state comes from flags and the config file.
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let outcome = match cli.command {
        Command::Ingest(args) => commands::ingest(&args),
        Command::Stats(args) => commands::stats(&args),
        Command::Split(args) => commands::split(&args),
        Command::Build { common, approach } => commands::build(&common, approach),
        Command::Chunk(args) => commands::chunk(&args),
        Command::Train { common, approach } => commands::train(&common, approach),
        Command::Predict { common, model, eval } => commands::predict(&common, model.as_deref(), eval.as_deref()),
        Command::Eval(args) => commands::eval(&args),
        Command::Experiment(args) => commands::experiment(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
