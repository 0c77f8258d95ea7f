use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use mmkg_core::graph::save_graph_dir;
use mmkg_core::synthdata::{
    generate_planted_graph, generate_random_graph, PlantedSpec, SynthSpec,
};

use crate::commands::DEFAULT_SEED;
use crate::manifest::{prepare_out_dir, ManifestBuilder};

#[derive(Debug, Args, Serialize)]
pub struct GenSynthArgs {
    /// JSON spec file; explicit count flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    #[arg(long)]
    pub concepts: Option<usize>,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub cross: Option<usize>,
    #[arg(long)]
    pub intra: Option<usize>,

    /// Latent dimension; enables planted-structure generation.
    #[arg(long)]
    pub planted_dim: Option<usize>,
    /// Distance noise for planted generation.
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,

    #[arg(long)]
    pub out: PathBuf,
}

fn resolve_spec(args: &GenSynthArgs, seed: Option<u64>) -> Result<SynthSpec> {
    let mut spec = match &args.spec {
        Some(path) => serde_json::from_str::<SynthSpec>(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?,
        None => {
            let (Some(concepts), Some(images), Some(relations), Some(cross), Some(intra)) = (
                args.concepts,
                args.images,
                args.relations,
                args.cross,
                args.intra,
            ) else {
                bail!(
                    "without --spec, all of --concepts --images --relations --cross --intra \
                     are required"
                );
            };
            SynthSpec {
                num_concepts: concepts,
                num_images: images,
                num_relations: relations,
                cross_edges: cross,
                intra_edges: intra,
                seed: DEFAULT_SEED,
                planted: None,
            }
        }
    };
    if let Some(v) = args.concepts {
        spec.num_concepts = v;
    }
    if let Some(v) = args.images {
        spec.num_images = v;
    }
    if let Some(v) = args.relations {
        spec.num_relations = v;
    }
    if let Some(v) = args.cross {
        spec.cross_edges = v;
    }
    if let Some(v) = args.intra {
        spec.intra_edges = v;
    }
    if let Some(dim) = args.planted_dim {
        spec.planted = Some(PlantedSpec {
            latent_dim: dim,
            noise_sigma: args.noise_sigma,
        });
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

pub fn run(args: &GenSynthArgs, seed: Option<u64>, force: bool) -> Result<()> {
    let spec = resolve_spec(args, seed)?;
    let mut manifest = ManifestBuilder::new("gen-synth", args, spec.seed)?;
    if let Some(path) = &args.spec {
        manifest.add_input(path)?;
    }

    let graph = if spec.planted.is_some() {
        generate_planted_graph(&spec)?
    } else {
        generate_random_graph(&spec)?
    };

    prepare_out_dir(&args.out, force)?;
    save_graph_dir(&graph, &args.out.join("graph"))?;
    fs::write(args.out.join("spec.json"), serde_json::to_vec_pretty(&spec)?)?;
    manifest.add_output("graph/nodes.tsv");
    manifest.add_output("graph/relations.tsv");
    manifest.add_output("graph/triples.tsv");
    manifest.add_output("spec.json");
    manifest.write(&args.out)?;

    let stats = graph.compute_stats();
    println!(
        "generated {} concepts, {} images, {} cross + {} intra edges",
        stats.num_concepts, stats.num_images, stats.cross_edges, stats.intra_edges
    );
    Ok(())
}
