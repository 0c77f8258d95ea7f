//! Link-prediction scoring models over dense entity/relation vocabularies.
//!
//! Eleven models share one interface: a [`ModelState`] bundles the parameter
//! tables, [`score_triple`] returns a higher-is-better plausibility score
//! (distance-based models negate their distance), and [`grad_triple`]
//! returns the analytic partial derivatives of the score with respect to
//! every parameter the triple touches, as a sparse per-row gradient.
//!
//! Images and concepts share a single entity table; nothing in here knows
//! which entities are images. Scoring and gradients are pure functions of an
//! immutable state snapshot and parallelize freely; updates need exclusive
//! access (see the training module).

mod checkpoint;
mod score;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use score::{grad_triple, score_candidates, score_triple, PredictTask};

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::MultimodalGraph;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid dimension {0}; must be at least 1")]
    InvalidDimension(usize),
    #[error("{what} index {index} out of range ({len} available)")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The eleven scoring models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    TransH,
    TransR,
    TransD,
    RotatE,
    Rescal,
    DistMult,
    ComplEx,
    SimplE,
    Tucker,
    MurE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 11] = [
        ModelKind::TransE,
        ModelKind::TransH,
        ModelKind::TransR,
        ModelKind::TransD,
        ModelKind::RotatE,
        ModelKind::Rescal,
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::SimplE,
        ModelKind::Tucker,
        ModelKind::MurE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::TransH => "transh",
            ModelKind::TransR => "transr",
            ModelKind::TransD => "transd",
            ModelKind::RotatE => "rotate",
            ModelKind::Rescal => "rescal",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::SimplE => "simple",
            ModelKind::Tucker => "tucker",
            ModelKind::MurE => "mure",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<ModelKind, String> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown model {s:?}"))
    }
}

/// Dense integer ids for all nodes (concepts and images merged into one
/// entity space) and all relation types. Assignment is the sorted id order,
/// so the same graph always yields the same index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabIndex {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_lookup: HashMap<String, usize>,
    relation_lookup: HashMap<String, usize>,
}

impl VocabIndex {
    pub fn from_graph(graph: &MultimodalGraph) -> VocabIndex {
        let mut entities: Vec<String> = graph
            .concepts()
            .map(|c| c.cui.clone())
            .chain(graph.images().map(|i| i.image_id.clone()))
            .collect();
        entities.sort_unstable();
        let relations: Vec<String> = graph.relations().map(|r| r.relation_id.clone()).collect();
        VocabIndex::from_parts(entities, relations)
    }

    pub fn from_parts(entities: Vec<String>, relations: Vec<String>) -> VocabIndex {
        let entity_lookup = entities
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let relation_lookup = relations
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        VocabIndex {
            entities,
            relations,
            entity_lookup,
            relation_lookup,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_lookup.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_lookup.get(name).copied()
    }

    pub fn entity(&self, id: usize) -> Option<&str> {
        self.entities.get(id).map(|s| s.as_str())
    }

    pub fn relation(&self, id: usize) -> Option<&str> {
        self.relations.get(id).map(|s| s.as_str())
    }

    /// Content hash of the index, stored in checkpoints so a model is never
    /// silently evaluated against a different vocabulary.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entities {
            hasher.update(b"e:");
            hasher.update(e.as_bytes());
            hasher.update(b"\n");
        }
        for r in &self.relations {
            hasher.update(b"r:");
            hasher.update(r.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One named parameter table, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ParamGroup {
    fn zeroed(name: &'static str, rows: usize, cols: usize) -> ParamGroup {
        ParamGroup {
            name,
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Shapes of the parameter tables of a model, in checkpoint order.
pub fn group_specs(
    kind: ModelKind,
    dim: usize,
    num_entities: usize,
    num_relations: usize,
) -> Vec<(&'static str, usize, usize)> {
    let (n, r, d) = (num_entities, num_relations, dim);
    match kind {
        ModelKind::TransE | ModelKind::DistMult => {
            vec![("entity", n, d), ("relation", r, d)]
        }
        ModelKind::TransH => vec![("entity", n, d), ("relation", r, d), ("normal", r, d)],
        ModelKind::TransR => vec![("entity", n, d), ("relation", r, d), ("proj", r, d * d)],
        ModelKind::TransD => vec![
            ("entity", n, d),
            ("relation", r, d),
            ("entity_proj", n, d),
            ("relation_proj", r, d),
        ],
        ModelKind::RotatE => vec![("entity", n, 2 * d), ("phase", r, d)],
        ModelKind::Rescal => vec![("entity", n, d), ("rel_matrix", r, d * d)],
        ModelKind::ComplEx => vec![("entity", n, 2 * d), ("relation", r, 2 * d)],
        ModelKind::SimplE => vec![
            ("entity_head", n, d),
            ("entity_tail", n, d),
            ("relation", r, d),
            ("relation_inv", r, d),
        ],
        ModelKind::Tucker => vec![("entity", n, d), ("relation", r, d), ("core", 1, d * d * d)],
        ModelKind::MurE => vec![
            ("entity", n, d),
            ("rel_scale", r, d),
            ("rel_trans", r, d),
            ("bias", n, 1),
        ],
    }
}

/// Parameters of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub kind: ModelKind,
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub seed: u64,
    pub vocab_hash: String,
    pub groups: Vec<ParamGroup>,
}

impl ModelState {
    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn check_entity(&self, id: usize) -> Result<(), EmbedError> {
        if id >= self.num_entities {
            return Err(EmbedError::IndexOutOfRange {
                what: "entity",
                index: id,
                len: self.num_entities,
            });
        }
        Ok(())
    }

    pub fn check_relation(&self, id: usize) -> Result<(), EmbedError> {
        if id >= self.num_relations {
            return Err(EmbedError::IndexOutOfRange {
                what: "relation",
                index: id,
                len: self.num_relations,
            });
        }
        Ok(())
    }

    /// True when every parameter is finite.
    pub fn all_finite(&self) -> bool {
        self.groups
            .iter()
            .all(|g| g.data.iter().all(|v| v.is_finite()))
    }

    /// Re-apply the model's parameter constraints to the given rows of one
    /// group (hyperplane normals stay unit length). Other models need none:
    /// rotation phases are stored as angles, so moduli are 1 by construction.
    pub fn project_constraints(&mut self, group: usize, row: usize) {
        if self.kind == ModelKind::TransH && self.groups[group].name == "normal" {
            let r = self.groups[group].row_mut(row);
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for v in r {
                    *v /= norm;
                }
            }
        }
    }
}

/// Initialize a model with uniform(-b, b) tables, b = 6/sqrt(dim), then
/// apply constraint projections. Rotation phases start uniform in [0, 2pi)
/// and the shared core tensor uniform in (-1, 1). Identical arguments give
/// bitwise-identical states.
pub fn init_model(
    kind: ModelKind,
    dim: usize,
    vocab: &VocabIndex,
    seed: u64,
) -> Result<ModelState, EmbedError> {
    if dim == 0 {
        return Err(EmbedError::InvalidDimension(dim));
    }
    let bound = 6.0 / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::new();
    for (name, rows, cols) in group_specs(kind, dim, vocab.num_entities(), vocab.num_relations()) {
        let mut g = ParamGroup::zeroed(name, rows, cols);
        match name {
            "phase" => {
                for v in &mut g.data {
                    *v = rng.random_range(0.0..TAU);
                }
            }
            "core" => {
                for v in &mut g.data {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            _ => {
                for v in &mut g.data {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        groups.push(g);
    }
    let mut state = ModelState {
        kind,
        dim,
        num_entities: vocab.num_entities(),
        num_relations: vocab.num_relations(),
        seed,
        vocab_hash: vocab.hash(),
        groups,
    };
    if kind == ModelKind::TransH {
        let normal_idx = 2;
        for row in 0..state.num_relations {
            state.project_constraints(normal_idx, row);
        }
    }
    Ok(state)
}

/// Gradient of a score with respect to one parameter row.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub group: usize,
    pub row: usize,
    pub values: Vec<f64>,
}

/// Sparse gradient: only touched rows appear, each exactly once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    pub entries: Vec<GradEntry>,
}

impl SparseGrad {
    pub fn new() -> SparseGrad {
        SparseGrad::default()
    }

    /// Add `values` into the (group, row) entry, merging repeated rows (a
    /// triple with equal head and tail touches the same row twice).
    pub fn accumulate(&mut self, group: usize, row: usize, values: &[f64]) {
        if let Some(e) = self
            .entries
            .iter_mut()
            .find(|e| e.group == group && e.row == row)
        {
            for (dst, src) in e.values.iter_mut().zip(values) {
                *dst += src;
            }
        } else {
            self.entries.push(GradEntry {
                group,
                row,
                values: values.to_vec(),
            });
        }
    }

    /// Merge another sparse gradient into this one.
    pub fn merge(&mut self, other: &SparseGrad) {
        for e in &other.entries {
            self.accumulate(e.group, e.row, &e.values);
        }
    }

    /// Multiply every stored derivative by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            for v in &mut e.values {
                *v *= factor;
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.values.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_random_graph, SynthSpec};

    fn small_vocab() -> VocabIndex {
        VocabIndex::from_parts(
            (0..7).map(|i| format!("e{i}")).collect(),
            (0..3).map(|i| format!("r{i}")).collect(),
        )
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let vocab = small_vocab();
        for kind in ModelKind::ALL {
            let a = init_model(kind, 8, &vocab, 42).unwrap();
            let b = init_model(kind, 8, &vocab, 42).unwrap();
            assert_eq!(a, b, "{kind} not deterministic");
            let c = init_model(kind, 8, &vocab, 43).unwrap();
            assert_ne!(a, c, "{kind} ignores the seed");
        }
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            init_model(ModelKind::TransE, 0, &small_vocab(), 42),
            Err(EmbedError::InvalidDimension(0))
        ));
    }

    #[test]
    fn transh_normals_unit_after_init() {
        let state = init_model(ModelKind::TransH, 16, &small_vocab(), 42).unwrap();
        let normals = state.group("normal").unwrap();
        for row in 0..normals.rows {
            let norm: f64 = normals.row(row).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-6, "row {row} norm {norm}");
        }
    }

    #[test]
    fn init_tables_respect_bounds() {
        let dim = 9;
        let bound = 6.0 / (dim as f64).sqrt();
        for kind in ModelKind::ALL {
            let state = init_model(kind, dim, &small_vocab(), 1).unwrap();
            for g in &state.groups {
                for &v in &g.data {
                    match g.name {
                        "phase" => assert!((0.0..TAU).contains(&v)),
                        "core" => assert!((-1.0..1.0).contains(&v)),
                        // TransH normals are rescaled to unit length.
                        "normal" => assert!(v.abs() <= 1.0),
                        _ => assert!(v.abs() <= bound, "{kind} {} {v}", g.name),
                    }
                }
            }
        }
    }

    #[test]
    fn vocab_from_graph_is_stable_and_merged() {
        let spec = SynthSpec {
            num_concepts: 10,
            num_images: 6,
            num_relations: 4,
            cross_edges: 30,
            intra_edges: 10,
            seed: 5,
            planted: None,
        };
        let g = generate_random_graph(&spec).unwrap();
        let a = VocabIndex::from_graph(&g);
        let b = VocabIndex::from_graph(&g);
        assert_eq!(a, b);
        assert_eq!(a.num_entities(), 16);
        assert_eq!(a.num_relations(), 4);
        assert_eq!(a.hash(), b.hash());
        // Round trip entity ids.
        for i in 0..a.num_entities() {
            let name = a.entity(i).unwrap();
            assert_eq!(a.entity_id(name), Some(i));
        }
    }

    #[test]
    fn sparse_grad_merges_repeated_rows() {
        let mut g = SparseGrad::new();
        g.accumulate(0, 3, &[1.0, 2.0]);
        g.accumulate(0, 3, &[0.5, -1.0]);
        g.accumulate(1, 0, &[4.0]);
        assert_eq!(g.entries.len(), 2);
        assert_eq!(g.entries[0].values, vec![1.5, 1.0]);
        g.scale(2.0);
        assert_eq!(g.entries[0].values, vec![3.0, 2.0]);
    }

    #[test]
    fn model_kind_name_roundtrip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("convnet".parse::<ModelKind>().is_err());
        // serde uses the same lowercase names
        assert_eq!(
            serde_json::to_string(&ModelKind::Tucker).unwrap(),
            "\"tucker\""
        );
    }
}
