use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;

use mmkg_core::embeddings::{load_checkpoint, VocabIndex};
use mmkg_core::evaluation::evaluate;
use mmkg_core::graph::load_graph_dir;
use mmkg_core::training::SplitSpec;
use mmkg_core::training::Ratios;

use crate::commands::{read_triple_file, DEFAULT_SEED};
use crate::manifest::{prepare_out_dir, ManifestBuilder};

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Graph directory; must be the one the checkpoint was trained on.
    #[arg(long)]
    pub graph: PathBuf,

    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Test triple TSV file.
    #[arg(long)]
    pub test: PathBuf,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvaluateArgs, seed: Option<u64>, force: bool) -> Result<()> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let mut manifest = ManifestBuilder::new("evaluate", args, seed)?;
    manifest.add_input_dir(&args.graph)?;
    manifest.add_input(&args.checkpoint)?;
    manifest.add_input(&args.test)?;

    let graph = load_graph_dir(&args.graph)?;
    let vocab = VocabIndex::from_graph(&graph);
    let state = load_checkpoint(&args.checkpoint)?;
    if state.vocab_hash != vocab.hash() {
        bail!(
            "checkpoint was trained on a different vocabulary (hash {} vs graph {})",
            state.vocab_hash,
            vocab.hash()
        );
    }

    let test_list = read_triple_file(&args.test)?;
    let split = SplitSpec {
        train: Vec::new(),
        valid: Vec::new(),
        test: test_list,
        ratios: Ratios::DEFAULT,
    };
    let (_, _, test_ids) = split.to_ids(&vocab)?;
    let report = evaluate(&state, &test_ids)?;

    prepare_out_dir(&args.out, force)?;
    fs::write(
        args.out.join("report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    manifest.add_output("report.json");
    manifest.write(&args.out)?;

    print!("{}", report.to_table());
    Ok(())
}
