use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use mmkg_core::graph::load_graph_dir;

use crate::commands::DEFAULT_SEED;
use crate::manifest::{prepare_out_dir, ManifestBuilder};

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Graph directory (nodes.tsv, relations.tsv, triples.tsv).
    #[arg(long)]
    pub graph: PathBuf,

    /// Optional directory for stats.json (full precision) and a manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &StatsArgs, seed: Option<u64>, force: bool) -> Result<()> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let graph = load_graph_dir(&args.graph)?;
    let stats = graph.compute_stats();
    println!("{stats}");

    if let Some(out) = &args.out {
        let mut manifest = ManifestBuilder::new("stats", args, seed)?;
        manifest.add_input_dir(&args.graph)?;
        prepare_out_dir(out, force)?;
        fs::write(out.join("stats.json"), serde_json::to_vec_pretty(&stats)?)?;
        manifest.add_output("stats.json");
        manifest.write(out)?;
    }
    Ok(())
}
