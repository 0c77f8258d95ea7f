use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use mmkg_core::graph::load_graph_dir;
use mmkg_core::training::{split_triples, Ratios};

use crate::commands::{write_triple_file, DEFAULT_SEED};
use crate::manifest::{prepare_out_dir, ManifestBuilder};

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    /// Graph directory (nodes.tsv, relations.tsv, triples.tsv).
    #[arg(long)]
    pub graph: PathBuf,

    /// Train:valid:test proportions.
    #[arg(long, default_value = "8:1:1")]
    pub ratios: String,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SplitArgs, seed: Option<u64>, force: bool) -> Result<()> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let mut manifest = ManifestBuilder::new("split", args, seed)?;
    manifest.add_input_dir(&args.graph)?;

    let ratios = Ratios::parse(&args.ratios)?;
    let graph = load_graph_dir(&args.graph)?;
    let triples: Vec<_> = graph.triples().cloned().collect();
    let split = split_triples(&triples, ratios, seed)?;

    prepare_out_dir(&args.out, force)?;
    write_triple_file(&args.out.join("train.tsv"), &split.train)?;
    write_triple_file(&args.out.join("valid.tsv"), &split.valid)?;
    write_triple_file(&args.out.join("test.tsv"), &split.test)?;
    manifest.add_output("train.tsv");
    manifest.add_output("valid.tsv");
    manifest.add_output("test.tsv");
    manifest.write(&args.out)?;

    println!(
        "split {} triples into {}/{}/{}",
        triples.len(),
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );
    Ok(())
}
