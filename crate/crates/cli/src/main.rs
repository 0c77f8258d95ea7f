//! `mmkg`: build, filter, and benchmark multimodal medical knowledge graphs.
//!
//! Subcommands cover the full pipeline: `build` assembles a graph from
//! annotation records, `filter` runs neighbor-aware image selection,
//! `stats` summarizes a graph, `split`/`train`/`evaluate` run the link
//! prediction benchmark, and `gen-synth` produces synthetic graphs.
//!
//! Every command takes its randomness from `--seed` (default 42), refuses
//! to write into an existing output directory unless `--force` is given,
//! and drops a manifest (command, config hash, input digests, seed,
//! version, wall clock) next to its outputs. Exit codes: 0 success, 1 data
//! or I/O error, 2 usage error.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mmkg", version, about = "Multimodal medical knowledge graph toolkit")]
struct Cli {
    /// Seed for every random choice the command makes (default 42; an
    /// explicit flag overrides any seed found in a config or spec file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON config file with training hyperparameters (consumed by
    /// `train`; explicit flags override its fields).
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// Worker threads for parallel stages (default: available cores).
    /// Results do not depend on the worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Allow writing into an output directory that already exists.
    #[arg(long, global = true, default_value_t = false)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a graph from annotation records and a relation table.
    Build(commands::build::BuildArgs),
    /// Score images and select a coverage-preserving subset.
    Filter(commands::filter::FilterArgs),
    /// Print summary statistics of a graph.
    Stats(commands::stats::StatsArgs),
    /// Partition a graph's triples into train/valid/test files.
    Split(commands::split::SplitArgs),
    /// Train a link-prediction model on a split.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint on a test triple file.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Generate a synthetic graph (random or planted-structure).
    #[command(name = "gen-synth")]
    GenSynth(commands::gensynth::GenSynthArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Ignore failure: the global pool can only be set once (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let result = match &cli.command {
        Command::Build(args) => commands::build::run(args, cli.seed, cli.force),
        Command::Filter(args) => commands::filter::run(args, cli.seed, cli.force),
        Command::Stats(args) => commands::stats::run(args, cli.seed, cli.force),
        Command::Split(args) => commands::split::run(args, cli.seed, cli.force),
        Command::Train(args) => {
            commands::train::run(args, cli.config.as_deref(), cli.seed, cli.force)
        }
        Command::Evaluate(args) => commands::evaluate::run(args, cli.seed, cli.force),
        Command::GenSynth(args) => commands::gensynth::run(args, cli.seed, cli.force),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
