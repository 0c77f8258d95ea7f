use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use mmkg_core::graph::{load_graph_dir, save_graph_dir};
use mmkg_core::naf::{run_naf, subgraph_from_selection};

use crate::commands::DEFAULT_SEED;
use crate::manifest::{prepare_out_dir, ManifestBuilder};

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    /// Graph directory (nodes.tsv, relations.tsv, triples.tsv).
    #[arg(long)]
    pub graph: PathBuf,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &FilterArgs, seed: Option<u64>, force: bool) -> Result<()> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let mut manifest = ManifestBuilder::new("filter", args, seed)?;
    manifest.add_input_dir(&args.graph)?;

    let graph = load_graph_dir(&args.graph)?;
    let outcome = run_naf(&graph);
    prepare_out_dir(&args.out, force)?;

    let scores_path = args.out.join("scores.tsv");
    let mut scores = BufWriter::new(
        fs::File::create(&scores_path)
            .with_context(|| format!("creating {}", scores_path.display()))?,
    );
    writeln!(scores, "# image_id\tscore")?;
    for entry in &outcome.scores {
        writeln!(scores, "{}\t{}", entry.image_id, entry.score)?;
    }
    drop(scores);

    let selected_path = args.out.join("selected.txt");
    fs::write(&selected_path, outcome.selected.join("\n") + "\n")?;

    let filtered = subgraph_from_selection(&graph, &outcome)?;
    save_graph_dir(&filtered, &args.out.join("graph"))?;

    manifest.add_output("scores.tsv");
    manifest.add_output("selected.txt");
    manifest.add_output("graph/nodes.tsv");
    manifest.add_output("graph/relations.tsv");
    manifest.add_output("graph/triples.tsv");
    manifest.write(&args.out)?;

    println!(
        "selected {} of {} images covering {} concepts{}",
        outcome.selected.len(),
        graph.num_images(),
        outcome.covered_concepts.len(),
        if outcome.coverage_incomplete {
            " (coverage incomplete)"
        } else {
            ""
        }
    );
    Ok(())
}
