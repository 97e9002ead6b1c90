use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tvdmerge::commands::{self, EstimateArgs, EvalArgs, MergeArgs, OverclusterArgs, RunConfig, SynthArgs};

#[derive(Parser)]
#[command(name = "tvdmerge", version)]
#[command(about = "Estimate pairwise TVDs between clusters with one classifier and merge over-clusterings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled Gaussian-mixture dataset.
    Synth(SynthArgs),
    /// Build an over-clustering (artificial or greedy), optionally with label noise.
    Overcluster(OverclusterArgs),
    /// Train the pairwise network and write the balanced-accuracy matrix.
    Estimate(EstimateArgs),
    /// Merge clusters hierarchically and write the merge trace.
    Merge(MergeArgs),
    /// Compute quality, average accuracy, purity and unique majorities.
    Eval(EvalArgs),
    /// Re-run the command recorded in an output file.
    Replay {
        /// Any file written by this tool.
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::run(&RunConfig::Synth(a)),
        Command::Overcluster(a) => commands::run(&RunConfig::Overcluster(a)),
        Command::Estimate(a) => commands::run(&RunConfig::Estimate(a)),
        Command::Merge(a) => commands::run(&RunConfig::Merge(a)),
        Command::Eval(a) => commands::run(&RunConfig::Eval(a)),
        Command::Replay { file } => commands::replay(&file),
    };
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = serde_json::json!({ "error": e.category(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
