//! Negative-sampled embedding training with decoupled weight decay.
//!
//! The loop is synchronous and reproducible: per batch, score and gradient
//! evaluation fan out across workers against a parameter snapshot, the
//! per-positive results are reduced in input order, and the single update
//! is applied under exclusive access. Identical inputs, config, and seed
//! give identical loss histories and the same early-stop epoch regardless
//! of worker count.
//!
//! After every epoch the validation mean rank on tail prediction decides
//! early stopping: when it fails to improve for `patience` consecutive
//! epochs the run stops and the best-validation snapshot is returned.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{
    grad_triple, init_model, score_triple, EmbedError, ModelKind, ModelState, PredictTask,
    SparseGrad, VocabIndex,
};
use crate::evaluation::{rank_triple, EvalError, IdTriple};
use crate::graph::{MultimodalGraph, Triple};

/// Resampling attempts per negative before giving up on filtering.
const MAX_RESAMPLE: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("too few triples: {0} (need at least 10)")]
    TooFewTriples(usize),
    #[error("invalid ratios {0:?}: every part must be positive")]
    InvalidRatios(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("split references {0:?}, which is not in the graph vocabulary")]
    UnknownSymbol(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite parameter in group {0} after update")]
    NonFiniteParameter(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LogSigmoid,
    MarginRanking,
}

/// Training hyperparameters. The serde representation mirrors the field
/// names, so a JSON config file can override any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub negatives_per_positive: usize,
    pub loss_kind: LossKind,
    pub margin: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 2048,
            learning_rate: 0.001,
            max_epochs: 500,
            patience: 5,
            negatives_per_positive: 16,
            loss_kind: LossKind::LogSigmoid,
            margin: 1.0,
            weight_decay: 0.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::InvalidConfig(what.to_string()));
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs < 1 {
            return bad("max_epochs must be at least 1");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if self.negatives_per_positive < 1 {
            return bad("negatives_per_positive must be at least 1");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.margin < 0.0 {
            return bad("margin must not be negative");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must not be negative");
        }
        Ok(())
    }
}

/// Split proportions, e.g. 8:1:1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: u64,
    pub valid: u64,
    pub test: u64,
}

impl Ratios {
    pub const DEFAULT: Ratios = Ratios {
        train: 8,
        valid: 1,
        test: 1,
    };

    /// Parse "a:b:c".
    pub fn parse(s: &str) -> Result<Ratios, TrainError> {
        let parts: Vec<&str> = s.split(':').collect();
        let invalid = || TrainError::InvalidRatios(s.to_string());
        if parts.len() != 3 {
            return Err(invalid());
        }
        let nums: Vec<u64> = parts
            .iter()
            .map(|p| p.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| invalid())?;
        let r = Ratios {
            train: nums[0],
            valid: nums[1],
            test: nums[2],
        };
        r.check().map(|_| r)
    }

    fn check(&self) -> Result<(), TrainError> {
        if self.train == 0 || self.valid == 0 || self.test == 0 {
            return Err(TrainError::InvalidRatios(format!(
                "{}:{}:{}",
                self.train, self.valid, self.test
            )));
        }
        Ok(())
    }
}

/// A train/valid/test partition of a triple list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub ratios: Ratios,
}

/// The three partitions of a split in dense id space.
pub type IdSplits = (Vec<IdTriple>, Vec<IdTriple>, Vec<IdTriple>);

impl SplitSpec {
    /// Map the split into dense id space against a vocabulary.
    pub fn to_ids(&self, vocab: &VocabIndex) -> Result<IdSplits, TrainError> {
        let convert = |list: &[Triple]| -> Result<Vec<IdTriple>, TrainError> {
            list.iter()
                .map(|t| {
                    Ok(IdTriple::new(
                        vocab
                            .entity_id(&t.head)
                            .ok_or_else(|| TrainError::UnknownSymbol(t.head.clone()))?,
                        vocab
                            .relation_id(&t.relation)
                            .ok_or_else(|| TrainError::UnknownSymbol(t.relation.clone()))?,
                        vocab
                            .entity_id(&t.tail)
                            .ok_or_else(|| TrainError::UnknownSymbol(t.tail.clone()))?,
                    ))
                })
                .collect()
        };
        Ok((convert(&self.train)?, convert(&self.valid)?, convert(&self.test)?))
    }
}

/// Cumulative-rounding boundary: round(n * num / den), half up.
fn boundary(n: usize, num: u64, den: u64) -> usize {
    ((2 * n as u128 * num as u128 + den as u128) / (2 * den as u128)) as usize
}

/// Deterministically shuffle and partition triples, then repair the split so
/// every entity and relation mentioned in valid/test also occurs in train
/// (violating triples swap places with train triples whose removal is safe).
/// Sizes stay within one of the exact ratio cut.
pub fn split_triples(
    triples: &[Triple],
    ratios: Ratios,
    seed: u64,
) -> Result<SplitSpec, TrainError> {
    ratios.check()?;
    if triples.len() < 10 {
        return Err(TrainError::TooFewTriples(triples.len()));
    }
    let mut shuffled: Vec<Triple> = triples.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n = shuffled.len();
    let total = ratios.train + ratios.valid + ratios.test;
    let cut1 = boundary(n, ratios.train, total);
    let cut2 = boundary(n, ratios.train + ratios.valid, total);
    let test = shuffled.split_off(cut2);
    let valid = shuffled.split_off(cut1);
    let train = shuffled;

    let mut split = SplitSpec {
        train,
        valid,
        test,
        ratios,
    };
    repair_coverage(&mut split);
    Ok(split)
}

fn count_symbols(train: &[Triple]) -> (HashMap<String, usize>, HashMap<String, usize>) {
    let mut entities: HashMap<String, usize> = HashMap::new();
    let mut relations: HashMap<String, usize> = HashMap::new();
    for t in train {
        *entities.entry(t.head.clone()).or_default() += 1;
        *entities.entry(t.tail.clone()).or_default() += 1;
        *relations.entry(t.relation.clone()).or_default() += 1;
    }
    (entities, relations)
}

fn repair_coverage(split: &mut SplitSpec) {
    let (mut entities, mut relations) = count_symbols(&split.train);
    let covered = |t: &Triple, ents: &HashMap<String, usize>, rels: &HashMap<String, usize>| {
        ents.get(&t.head).copied().unwrap_or(0) > 0
            && ents.get(&t.tail).copied().unwrap_or(0) > 0
            && rels.get(&t.relation).copied().unwrap_or(0) > 0
    };
    // A train triple is safe to move out when all of its symbols survive the
    // removal (self-loops cost an entity two counts).
    let safe = |t: &Triple, ents: &HashMap<String, usize>, rels: &HashMap<String, usize>| {
        let cost = if t.head == t.tail { 2 } else { 1 };
        ents.get(&t.head).copied().unwrap_or(0) > cost
            && ents.get(&t.tail).copied().unwrap_or(0) > cost
            && rels.get(&t.relation).copied().unwrap_or(0) > 1
    };

    for eval in [&mut split.valid, &mut split.test] {
        let mut i = 0;
        while i < eval.len() {
            if covered(&eval[i], &entities, &relations) {
                i += 1;
                continue;
            }
            let violator = eval[i].clone();
            *entities.entry(violator.head.clone()).or_default() += 1;
            *entities.entry(violator.tail.clone()).or_default() += 1;
            *relations.entry(violator.relation.clone()).or_default() += 1;
            split.train.push(violator);
            // Scan from the back for a swap partner; the just-pushed
            // violator sits last and is never safe to remove again.
            let swap = (0..split.train.len() - 1)
                .rev()
                .find(|&j| safe(&split.train[j], &entities, &relations));
            match swap {
                Some(j) => {
                    let replacement = split.train.remove(j);
                    *entities.get_mut(&replacement.head).unwrap() -= 1;
                    *entities.get_mut(&replacement.tail).unwrap() -= 1;
                    *relations.get_mut(&replacement.relation).unwrap() -= 1;
                    eval[i] = replacement;
                    i += 1;
                }
                None => {
                    // No safe swap exists; the eval slot is dropped and the
                    // violator stays in train.
                    eval.remove(i);
                }
            }
        }
    }
}

/// Corrupted triples for one positive, plus how many fell back to an
/// unfiltered corruption because resampling kept hitting known positives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSample {
    pub triples: Vec<IdTriple>,
    pub exhausted: usize,
}

/// Draw `k` negatives by replacing the head or the tail (fair coin) with a
/// uniform entity, resampling corruptions that reproduce a known positive.
/// When resampling exhausts its budget the last corruption is kept as-is
/// and counted.
pub fn sample_negatives<R: Rng>(
    positive: IdTriple,
    num_entities: usize,
    k: usize,
    known: &HashSet<IdTriple>,
    rng: &mut R,
) -> NegativeSample {
    let mut triples = Vec::with_capacity(k);
    let mut exhausted = 0;
    for _ in 0..k {
        let corrupt_head = rng.random_bool(0.5);
        let mut accepted = None;
        let mut last = positive;
        for _ in 0..MAX_RESAMPLE {
            let e = rng.random_range(0..num_entities);
            let candidate = if corrupt_head {
                IdTriple::new(e, positive.relation, positive.tail)
            } else {
                IdTriple::new(positive.head, positive.relation, e)
            };
            last = candidate;
            if candidate != positive && !known.contains(&candidate) {
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(c) => triples.push(c),
            None => {
                triples.push(last);
                exhausted += 1;
            }
        }
    }
    NegativeSample { triples, exhausted }
}

/// Numerically stable ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Batch loss and its gradient.
///
/// LogSigmoid: mean over positives of -ln(sigmoid(s+)) plus mean over all
/// negatives of -ln(sigmoid(-s-)). MarginRanking: mean over (positive,
/// negative) pairs of max(0, margin - s+ + s-). `negatives[i]` belongs to
/// `positives[i]`.
pub fn loss_and_grad(
    state: &ModelState,
    positives: &[IdTriple],
    negatives: &[Vec<IdTriple>],
    config: &TrainConfig,
) -> Result<(f64, SparseGrad), TrainError> {
    assert_eq!(
        positives.len(),
        negatives.len(),
        "one negative set per positive"
    );
    if positives.is_empty() {
        return Ok((0.0, SparseGrad::new()));
    }
    let num_pos = positives.len() as f64;
    let num_neg: f64 = negatives.iter().map(|n| n.len()).sum::<usize>() as f64;
    let num_pairs = num_neg;

    let per_positive: Vec<Result<(f64, SparseGrad), TrainError>> = positives
        .par_iter()
        .zip(negatives.par_iter())
        .map(|(&pos, negs)| {
            let mut grad = SparseGrad::new();
            let mut loss = 0.0;
            let s_pos = score_triple(state, pos.head, pos.relation, pos.tail)?;
            match config.loss_kind {
                LossKind::LogSigmoid => {
                    loss += softplus(-s_pos) / num_pos;
                    let up_pos = -sigmoid(-s_pos) / num_pos;
                    grad.merge(&grad_triple(state, pos.head, pos.relation, pos.tail, up_pos)?);
                    for &neg in negs {
                        let s_neg = score_triple(state, neg.head, neg.relation, neg.tail)?;
                        loss += softplus(s_neg) / num_neg;
                        let up_neg = sigmoid(s_neg) / num_neg;
                        grad.merge(&grad_triple(
                            state,
                            neg.head,
                            neg.relation,
                            neg.tail,
                            up_neg,
                        )?);
                    }
                }
                LossKind::MarginRanking => {
                    let mut up_pos = 0.0;
                    for &neg in negs {
                        let s_neg = score_triple(state, neg.head, neg.relation, neg.tail)?;
                        let slack = config.margin - s_pos + s_neg;
                        if slack > 0.0 {
                            loss += slack / num_pairs;
                            up_pos -= 1.0 / num_pairs;
                            grad.merge(&grad_triple(
                                state,
                                neg.head,
                                neg.relation,
                                neg.tail,
                                1.0 / num_pairs,
                            )?);
                        }
                    }
                    if up_pos != 0.0 {
                        grad.merge(&grad_triple(
                            state,
                            pos.head,
                            pos.relation,
                            pos.tail,
                            up_pos,
                        )?);
                    }
                }
            }
            Ok((loss, grad))
        })
        .collect();

    let mut total = SparseGrad::new();
    let mut loss = 0.0;
    for item in per_positive {
        let (l, g) = item?;
        loss += l;
        total.merge(&g);
    }
    if !loss.is_finite() || !total.all_finite() {
        return Err(TrainError::NonFiniteLoss { epoch: 0, batch: 0 });
    }
    Ok((loss, total))
}

/// First and second moment estimates mirroring a model's parameter tables.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moments1: Vec<Vec<f64>>,
    moments2: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(state: &ModelState) -> OptimizerState {
        OptimizerState::with_constants(state, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(
        state: &ModelState,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> OptimizerState {
        OptimizerState {
            beta1,
            beta2,
            epsilon,
            step: 0,
            moments1: state.groups.iter().map(|g| vec![0.0; g.data.len()]).collect(),
            moments2: state.groups.iter().map(|g| vec![0.0; g.data.len()]).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.moments1
            .iter()
            .chain(self.moments2.iter())
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// One decoupled-weight-decay adaptive update over the touched parameters,
/// followed by the model's constraint projections on the touched rows.
pub fn optimizer_step(
    state: &mut ModelState,
    opt: &mut OptimizerState,
    grad: &SparseGrad,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    opt.step += 1;
    let bc1 = 1.0 - opt.beta1.powi(opt.step as i32);
    let bc2 = 1.0 - opt.beta2.powi(opt.step as i32);
    for entry in &grad.entries {
        let group = &mut state.groups[entry.group];
        let offset = entry.row * group.cols;
        for (col, &g) in entry.values.iter().enumerate() {
            let idx = offset + col;
            let m = &mut opt.moments1[entry.group][idx];
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
            let v = &mut opt.moments2[entry.group][idx];
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let theta = &mut group.data[idx];
            *theta -= config.learning_rate
                * (m_hat / (v_hat.sqrt() + opt.epsilon) + config.weight_decay * *theta);
            if !theta.is_finite() {
                return Err(TrainError::NonFiniteParameter(group.name.to_string()));
            }
        }
    }
    for entry in &grad.entries {
        state.project_constraints(entry.group, entry.row);
    }
    Ok(())
}

/// Loss and validation metric of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_mr: f64,
}

/// A finished run: best-validation model, per-epoch history, and the epoch
/// the returned snapshot came from.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub negatives_exhausted: usize,
}

/// Train a model on the split's train partition, early-stopping on tail
/// mean rank over the valid partition.
pub fn train(
    graph: &MultimodalGraph,
    split: &SplitSpec,
    kind: ModelKind,
    dim: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let vocab = VocabIndex::from_graph(graph);
    let (train_ids, valid_ids, _) = split.to_ids(&vocab)?;
    let validator = move |state: &ModelState, _epoch: usize| -> Result<f64, TrainError> {
        validation_tail_mr(state, &valid_ids)
    };
    train_ids_with_validator(&vocab, train_ids, kind, dim, config, validator)
}

/// Mean rank of tail prediction over a validation set.
pub fn validation_tail_mr(state: &ModelState, valid: &[IdTriple]) -> Result<f64, TrainError> {
    if valid.is_empty() {
        return Err(TrainError::EmptySplit("validation partition".into()));
    }
    let ranks: Vec<usize> = valid
        .par_iter()
        .map(|&t| rank_triple(state, t, PredictTask::Tail))
        .collect::<Result<_, _>>()?;
    Ok(ranks.iter().map(|&r| r as f64).sum::<f64>() / ranks.len() as f64)
}

/// [`train`] with a caller-supplied validation metric (lower is better).
/// The real pipeline passes tail mean rank; tests inject synthetic metrics
/// to pin the early-stopping contract.
pub fn train_with_validator<F>(
    graph: &MultimodalGraph,
    split: &SplitSpec,
    kind: ModelKind,
    dim: usize,
    config: &TrainConfig,
    validator: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&ModelState, usize) -> Result<f64, TrainError>,
{
    let vocab = VocabIndex::from_graph(graph);
    let (train_ids, _, _) = split.to_ids(&vocab)?;
    train_ids_with_validator(&vocab, train_ids, kind, dim, config, validator)
}

fn train_ids_with_validator<F>(
    vocab: &VocabIndex,
    train_ids: Vec<IdTriple>,
    kind: ModelKind,
    dim: usize,
    config: &TrainConfig,
    mut validator: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&ModelState, usize) -> Result<f64, TrainError>,
{
    config.validate()?;
    if train_ids.is_empty() {
        return Err(TrainError::EmptySplit("train partition".into()));
    }
    let known: HashSet<IdTriple> = train_ids.iter().copied().collect();
    let mut state = init_model(kind, dim, vocab, config.seed)?;
    let mut opt = OptimizerState::new(&state);
    // Separate stream from init so parameter draws and sampling never alias.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);

    let mut order: Vec<IdTriple> = train_ids.clone();
    let mut history = Vec::new();
    let mut best_mr = f64::INFINITY;
    let mut best_state = state.clone();
    let mut best_epoch = 0;
    let mut bad_epochs = 0;
    let mut negatives_exhausted = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let negatives: Vec<Vec<IdTriple>> = batch
                .iter()
                .map(|&pos| {
                    let sample = sample_negatives(
                        pos,
                        vocab.num_entities(),
                        config.negatives_per_positive,
                        &known,
                        &mut rng,
                    );
                    negatives_exhausted += sample.exhausted;
                    sample.triples
                })
                .collect();
            let (loss, grad) =
                loss_and_grad(&state, batch, &negatives, config).map_err(|e| match e {
                    TrainError::NonFiniteLoss { .. } => TrainError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    },
                    other => other,
                })?;
            optimizer_step(&mut state, &mut opt, &grad, config)?;
            epoch_loss += loss * batch.len() as f64;
        }
        epoch_loss /= train_ids.len() as f64;

        let val_mr = validator(&state, epoch)?;
        history.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            val_mr,
        });
        if val_mr < best_mr {
            best_mr = val_mr;
            best_state = state.clone();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        state: best_state,
        history,
        best_epoch,
        negatives_exhausted,
    })
}

/// Symbols (entities, relations) appearing in a triple list. Test helper
/// for split coverage checks.
#[doc(hidden)]
pub fn symbol_sets(triples: &[Triple]) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut entities = BTreeSet::new();
    let mut relations = BTreeSet::new();
    for t in triples {
        entities.insert(t.head.clone());
        entities.insert(t.tail.clone());
        relations.insert(t.relation.clone());
    }
    (entities, relations)
}
