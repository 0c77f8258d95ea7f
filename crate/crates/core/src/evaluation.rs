//! Ranking evaluation for link prediction, plus generic retrieval and
//! classification metrics.
//!
//! Ranking is raw: the candidate pool is the full entity set for head and
//! tail prediction (images and concepts alike) and the full relation set for
//! relation prediction, with no filtering of other known-true triples. Ties
//! take the mid rank, `1 + #better + floor(#equal / 2)`, so a constant
//! scorer lands mid-pool instead of being rewarded with rank 1.

use std::collections::BTreeMap;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{score_candidates, EmbedError, ModelState, PredictTask};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid K {0}; must be at least 1")]
    InvalidK(usize),
    #[error("relevant set is empty; recall is undefined")]
    EmptyRelevant,
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// A triple in dense id space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdTriple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl IdTriple {
    pub fn new(head: usize, relation: usize, tail: usize) -> IdTriple {
        IdTriple {
            head,
            relation,
            tail,
        }
    }
}

/// Ranks of the ground-truth candidates for one task, one per test triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankResult {
    pub task: PredictTask,
    pub ranks: Vec<usize>,
}

/// Mean rank and Hits@K percentages for one prediction task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub mr: f64,
    /// K -> percentage in [0, 100].
    pub hits: BTreeMap<usize, f64>,
}

/// Per-task evaluation over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub head: TaskReport,
    pub relation: TaskReport,
    pub tail: TaskReport,
}

pub const HITS_KS: [usize; 3] = [3, 5, 10];

/// Rank of the true candidate among all candidates for `task`, with
/// mid-rank tie handling.
pub fn rank_triple(
    state: &ModelState,
    triple: IdTriple,
    task: PredictTask,
) -> Result<usize, EvalError> {
    let (fixed_a, fixed_b, true_idx) = match task {
        PredictTask::Head => (triple.relation, triple.tail, triple.head),
        PredictTask::Relation => (triple.head, triple.tail, triple.relation),
        PredictTask::Tail => (triple.head, triple.relation, triple.tail),
    };
    let scores = score_candidates(state, task, fixed_a, fixed_b)?;
    if true_idx >= scores.len() {
        return Err(EmbedError::IndexOutOfRange {
            what: "candidate",
            index: true_idx,
            len: scores.len(),
        }
        .into());
    }
    let s_true = scores[true_idx];
    let mut better = 0usize;
    let mut equal = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > s_true {
            better += 1;
        } else if s == s_true && i != true_idx {
            equal += 1;
        }
    }
    Ok(1 + better + equal / 2)
}

/// Arithmetic mean of the ranks.
pub fn mean_rank(ranks: &[usize]) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(ranks.iter().map(|&r| r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Percentage of ranks at or under K.
pub fn hits_at_k(ranks: &[usize], k: usize) -> Result<f64, EvalError> {
    if k < 1 {
        return Err(EvalError::InvalidK(k));
    }
    if ranks.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(100.0 * hits as f64 / ranks.len() as f64)
}

fn task_report(ranks: &[usize]) -> Result<TaskReport, EvalError> {
    let mut hits = BTreeMap::new();
    for k in HITS_KS {
        hits.insert(k, hits_at_k(ranks, k)?);
    }
    Ok(TaskReport {
        mr: mean_rank(ranks)?,
        hits,
    })
}

/// Rank every test triple on all three tasks and assemble the report.
/// Scoring parallelizes across triples; the reduction keeps input order.
pub fn evaluate(state: &ModelState, test: &[IdTriple]) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut reports = Vec::new();
    for task in [PredictTask::Head, PredictTask::Relation, PredictTask::Tail] {
        let ranks: Vec<usize> = test
            .par_iter()
            .map(|&t| rank_triple(state, t, task))
            .collect::<Result<_, _>>()?;
        reports.push(task_report(&ranks)?);
    }
    let tail = reports.pop().unwrap();
    let relation = reports.pop().unwrap();
    let head = reports.pop().unwrap();
    Ok(EvalReport {
        head,
        relation,
        tail,
    })
}

impl EvalReport {
    /// Aligned plain-text table, one row per task.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>10} {:>8} {:>8} {:>8}\n",
            "Task", "MR", "Hits@3", "Hits@5", "Hits@10"
        ));
        for (name, report) in [
            ("Head", &self.head),
            ("Relation", &self.relation),
            ("Tail", &self.tail),
        ] {
            out.push_str(&format!(
                "{:<10} {:>10.2} {:>8.2} {:>8.2} {:>8.2}\n",
                name, report.mr, report.hits[&3], report.hits[&5], report.hits[&10]
            ));
        }
        out
    }
}

/// Precision and recall of the top-K retrieved items against a relevant set.
/// Precision divides by K even when fewer items were retrieved.
pub fn precision_recall_at_k<T: Eq + std::hash::Hash>(
    relevant: &HashSet<T>,
    retrieved: &[T],
    k: usize,
) -> Result<(f64, f64), EvalError> {
    if k < 1 {
        return Err(EvalError::InvalidK(k));
    }
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevant);
    }
    let top_hits = retrieved
        .iter()
        .take(k)
        .filter(|item| relevant.contains(item))
        .count();
    Ok((
        top_hits as f64 / k as f64,
        top_hits as f64 / relevant.len() as f64,
    ))
}

/// Binary classification metrics with explicit degenerate-denominator flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when no positive predictions exist (precision reported as 0).
    pub precision_defined: bool,
    /// False when no positive labels exist (recall reported as 0).
    pub recall_defined: bool,
}

/// Accuracy, precision, recall, and F1 from binary label/prediction lists.
/// Zero denominators report the metric as 0 and clear the matching flag.
pub fn classification_metrics(
    y_true: &[bool],
    y_pred: &[bool],
) -> Result<ClassificationMetrics, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fnr = 0usize;
    for (&label, &pred) in y_true.iter().zip(y_pred) {
        match (label, pred) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fnr += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / y_true.len() as f64;
    let precision_defined = tp + fp > 0;
    let recall_defined = tp + fnr > 0;
    let precision = if precision_defined {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if recall_defined {
        tp as f64 / (tp + fnr) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        accuracy,
        precision,
        recall,
        f1,
        precision_defined,
        recall_defined,
    })
}
