//! Command-line driver: ingest SMILES datasets, train the graph VAE, sample
//! molecules, evaluate sample sets, optimize properties in latent space and
//! inspect reconstructions.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

mod commands;
mod util;

use clap::{Parser, Subcommand};

use crate::commands::{evaluate, ingest, optimize, reconstruct, sample, train};

#[derive(Parser)]
#[command(name = "molgen", about = "Molecular graph generation with a constrained graph VAE")]
struct Cli {
    /// Worker threads for sampling/training (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a SMILES file (one molecule per line, optional numeric
    /// property columns) into a JSONL graph dataset.
    Ingest(ingest::IngestArgs),
    /// Train on a JSONL dataset and write a checkpoint plus loss log.
    Train(Box<train::TrainArgs>),
    /// Sample molecules from a trained checkpoint.
    Sample(sample::SampleArgs),
    /// Compare a sample set against a dataset: validity, novelty,
    /// uniqueness and distribution statistics.
    Evaluate(evaluate::EvaluateArgs),
    /// Gradient-ascent property optimization in latent space.
    Optimize(optimize::OptimizeArgs),
    /// Encode and decode dataset molecules for round-trip inspection.
    Reconstruct(reconstruct::ReconstructArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with successful exit
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not configure {n} threads: {e}");
            std::process::exit(1);
        }
    }
    let result = match cli.command {
        Command::Ingest(args) => ingest::run(args),
        Command::Train(args) => train::run(*args),
        Command::Sample(args) => sample::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::Optimize(args) => optimize::run(args),
        Command::Reconstruct(args) => reconstruct::run(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(util::exit_code(&e));
        }
    }
}
