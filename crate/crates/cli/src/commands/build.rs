use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use mmkg_core::construction::{
    build_graph, default_exclusion_list, filter_semantic_types, parse_exclusion_list,
    read_records, AnnotatorClient, BuildOptions, HttpAnnotator, IntraMode, MockAnnotator,
};
use mmkg_core::graph::save_graph_dir;

use crate::commands::DEFAULT_SEED;
use crate::manifest::{prepare_out_dir, ManifestBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorChoice {
    /// Deterministic offline annotator (first candidate, Positive).
    Mock,
    /// HTTP completion endpoint taken from MMKG_ANNOTATOR_URL.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntraModeChoice {
    /// Intra edges only between concepts co-selected for the same record.
    PerRecord,
    /// Intra edges between any two selected concepts in the graph.
    Global,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    /// JSONL annotation records, one per report.
    #[arg(long)]
    pub annotations: PathBuf,

    /// TSV relation table: cui_a<TAB>relation_id<TAB>cui_b.
    #[arg(long)]
    pub relations: PathBuf,

    /// Semantic-type exclusion list, one type per line. Defaults to the
    /// built-in list.
    #[arg(long)]
    pub exclusion: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = AnnotatorChoice::Mock)]
    pub annotator: AnnotatorChoice,

    /// Model name forwarded to the HTTP annotator.
    #[arg(long, default_value = "default")]
    pub model: String,

    #[arg(long, value_enum, default_value_t = IntraModeChoice::PerRecord)]
    pub intra_mode: IntraModeChoice,

    /// Send the whole report to the annotator instead of the extracted
    /// FINDINGS/IMPRESSION sections.
    #[arg(long, default_value_t = false)]
    pub full_report: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &BuildArgs, seed: Option<u64>, force: bool) -> Result<()> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let mut manifest = ManifestBuilder::new("build", args, seed)?;
    manifest.add_input(&args.annotations)?;
    manifest.add_input(&args.relations)?;

    let records = read_records(BufReader::new(
        fs::File::open(&args.annotations)
            .with_context(|| format!("opening {}", args.annotations.display()))?,
    ))?;
    if records.is_empty() {
        bail!("no records in {}", args.annotations.display());
    }

    let exclusion = match &args.exclusion {
        Some(path) => {
            manifest.add_input(path)?;
            parse_exclusion_list(
                &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
            )
        }
        None => default_exclusion_list(),
    };
    let records: Vec<_> = records
        .into_iter()
        .map(|mut r| {
            r.mentions = filter_semantic_types(&r.mentions, &exclusion);
            r
        })
        .collect();

    let table = mmkg_core::construction::RelationTable::read_tsv(BufReader::new(
        fs::File::open(&args.relations)
            .with_context(|| format!("opening {}", args.relations.display()))?,
    ))?;

    let options = BuildOptions {
        intra_mode: match args.intra_mode {
            IntraModeChoice::PerRecord => IntraMode::PerRecord,
            IntraModeChoice::Global => IntraMode::Global,
        },
        full_report: args.full_report,
    };
    let http_client;
    let mock_client;
    let client: &dyn AnnotatorClient = match args.annotator {
        AnnotatorChoice::Mock => {
            mock_client = MockAnnotator::new();
            &mock_client
        }
        AnnotatorChoice::Http => {
            http_client = HttpAnnotator::from_env(args.model.clone())?;
            &http_client
        }
    };

    prepare_out_dir(&args.out, force)?;
    let (graph, report) = build_graph(&records, &table, client, &options)?;
    if report.records_succeeded == 0 {
        let detail = report
            .failures
            .first()
            .map(|(id, reason)| format!("; first failure ({id}): {reason}"))
            .unwrap_or_default();
        bail!(
            "all {} records failed to disambiguate{detail}",
            report.records_total
        );
    }

    save_graph_dir(&graph, &args.out.join("graph"))?;
    fs::write(
        args.out.join("build_report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    manifest.add_output("graph/nodes.tsv");
    manifest.add_output("graph/relations.tsv");
    manifest.add_output("graph/triples.tsv");
    manifest.add_output("build_report.json");
    manifest.write(&args.out)?;

    let stats = graph.compute_stats();
    println!(
        "built graph: {} concepts, {} images, {} cross + {} intra edges \
         ({}/{} records ok, {} failed)",
        stats.num_concepts,
        stats.num_images,
        stats.cross_edges,
        stats.intra_edges,
        report.records_succeeded,
        report.records_total,
        report.failures.len(),
    );
    Ok(())
}
