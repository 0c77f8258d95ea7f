use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use mmkg_core::embeddings::{save_checkpoint, ModelKind};
use mmkg_core::graph::load_graph_dir;
use mmkg_core::training::{train, LossKind, Ratios, SplitSpec, TrainConfig};

use crate::commands::read_triple_file;
use crate::manifest::{prepare_out_dir, ManifestBuilder};

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Graph directory; defines the entity/relation vocabulary.
    #[arg(long)]
    pub graph: PathBuf,

    /// Split directory with train.tsv, valid.tsv, test.tsv.
    #[arg(long)]
    pub splits: PathBuf,

    /// Model: transe, transh, transr, transd, rotate, rescal, distmult,
    /// complex, simple, tucker, or mure.
    #[arg(long)]
    pub model: String,

    /// Entity embedding dimension.
    #[arg(long, default_value_t = 128)]
    pub dim: usize,

    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    /// log_sigmoid or margin_ranking.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    model: ModelKind,
    dim: usize,
    config: TrainConfig,
    epochs_run: usize,
    best_epoch: usize,
    best_val_mr: f64,
    negatives_exhausted: usize,
}

fn resolve_config(
    args: &TrainArgs,
    config_path: Option<&Path>,
    seed: Option<u64>,
) -> Result<TrainConfig> {
    let mut config = match config_path {
        Some(path) => serde_json::from_str(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.max_epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.patience {
        config.patience = v;
    }
    if let Some(v) = args.negatives {
        config.negatives_per_positive = v;
    }
    if let Some(loss) = &args.loss {
        config.loss_kind = match loss.as_str() {
            "log_sigmoid" => LossKind::LogSigmoid,
            "margin_ranking" => LossKind::MarginRanking,
            other => anyhow::bail!("unknown loss {other:?}"),
        };
    }
    if let Some(v) = args.margin {
        config.margin = v;
    }
    if let Some(v) = args.weight_decay {
        config.weight_decay = v;
    }
    // An explicit --seed wins over the config file; otherwise the file's
    // seed (or the default) stands.
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn run(
    args: &TrainArgs,
    config_path: Option<&Path>,
    seed: Option<u64>,
    force: bool,
) -> Result<()> {
    let config = resolve_config(args, config_path, seed)?;
    let mut manifest = ManifestBuilder::new("train", args, config.seed)?;
    manifest.add_input_dir(&args.graph)?;
    manifest.add_input_dir(&args.splits)?;
    if let Some(path) = config_path {
        manifest.add_input(path)?;
    }

    let kind: ModelKind = args.model.parse().map_err(anyhow::Error::msg)?;
    let graph = load_graph_dir(&args.graph)?;
    let train_list = read_triple_file(&args.splits.join("train.tsv"))?;
    let valid_list = read_triple_file(&args.splits.join("valid.tsv"))?;
    let test_list = read_triple_file(&args.splits.join("test.tsv"))?;
    let ratios = Ratios {
        train: train_list.len().max(1) as u64,
        valid: valid_list.len().max(1) as u64,
        test: test_list.len().max(1) as u64,
    };
    let split = SplitSpec {
        train: train_list,
        valid: valid_list,
        test: test_list,
        ratios,
    };

    prepare_out_dir(&args.out, force)?;
    let outcome = train(&graph, &split, kind, args.dim, &config)?;

    save_checkpoint(&outcome.state, &args.out.join("checkpoint.bin"))?;
    let history_path = args.out.join("history.csv");
    let mut history = BufWriter::new(fs::File::create(&history_path)?);
    writeln!(history, "epoch,loss,val_mr")?;
    for record in &outcome.history {
        writeln!(history, "{},{},{}", record.epoch, record.loss, record.val_mr)?;
    }
    drop(history);

    let best = outcome
        .history
        .iter()
        .find(|h| h.epoch == outcome.best_epoch)
        .map(|h| h.val_mr)
        .unwrap_or(f64::NAN);
    let summary = TrainSummary {
        model: kind,
        dim: args.dim,
        config,
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_mr: best,
        negatives_exhausted: outcome.negatives_exhausted,
    };
    fs::write(
        args.out.join("summary.json"),
        serde_json::to_vec_pretty(&summary)?,
    )?;

    manifest.add_output("checkpoint.bin");
    manifest.add_output("history.csv");
    manifest.add_output("summary.json");
    manifest.write(&args.out)?;

    println!(
        "trained {kind} for {} epochs; best validation tail MR {best:.2} at epoch {}",
        outcome.history.len(),
        outcome.best_epoch
    );
    Ok(())
}
