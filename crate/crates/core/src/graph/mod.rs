//! Typed storage for the multimodal knowledge graph.
//!
//! Two node kinds (concepts, images) and two edge kinds (intra-modality
//! concept-concept, cross-modality image-concept). All collections are
//! ordered so iteration, serialization, and statistics are deterministic.
//!
//! The graph keeps two derived indices in lockstep with the triple set:
//! per-node adjacency, and a map from (relation, concept) pairs to the set
//! of images linked through that pair. Both are rebuildable from the triples
//! alone; [`MultimodalGraph::check_consistency`] verifies that.

mod tsv;

pub use tsv::{load_graph_dir, read_graph, save_graph_dir, write_graph};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by graph construction, mutation, and parsing.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("unknown relation: {0}")]
    UnknownRelation(String),
    #[error("modality violation: {0}")]
    ModalityViolation(String),
    #[error("duplicate triple: ({0}, {1}, {2})")]
    DuplicateTriple(String, String, String),
    #[error("node conflict for id {id}: {reason}")]
    NodeConflict { id: String, reason: String },
    #[error("relation conflict for id {id}: {reason}")]
    RelationConflict { id: String, reason: String },
    #[error("invalid identifier {0:?}: {1}")]
    InvalidIdentifier(String, String),
    #[error("invalid field {0:?}: {1}")]
    InvalidField(String, String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{context}: {source}")]
    ParseIn {
        context: String,
        #[source]
        source: Box<GraphError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether an edge connects nodes of the same modality or bridges the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    /// Concept to concept, inherited from the terminology.
    Intra,
    /// Image to concept, produced by report annotation.
    Cross,
}

/// Stance of a cross-modality edge: whether the report supports, contradicts,
/// or is ambiguous about the concept's presence in the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
    Uncertain,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Uncertain];

    /// Case-insensitive parse of the three allowed labels.
    pub fn parse(s: &str) -> Option<Polarity> {
        match s.to_ascii_lowercase().as_str() {
            "positive" => Some(Polarity::Positive),
            "negative" => Some(Polarity::Negative),
            "uncertain" => Some(Polarity::Uncertain),
            _ => None,
        }
    }

    /// Reserved relation id for cross edges of this polarity.
    pub fn relation_id(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Uncertain => "uncertain",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "Positive",
            Polarity::Negative => "Negative",
            Polarity::Uncertain => "Uncertain",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A clinical concept node keyed by its CUI ("C" followed by digits).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptNode {
    pub cui: String,
    pub name: String,
    pub semantic_type: String,
}

impl ConceptNode {
    pub fn new(
        cui: impl Into<String>,
        name: impl Into<String>,
        semantic_type: impl Into<String>,
    ) -> Result<ConceptNode, GraphError> {
        let node = ConceptNode {
            cui: cui.into(),
            name: name.into(),
            semantic_type: semantic_type.into(),
        };
        if !is_valid_cui(&node.cui) {
            return Err(GraphError::InvalidIdentifier(
                node.cui.clone(),
                "CUI must be 'C' followed by digits".into(),
            ));
        }
        check_field(&node.name, "concept name")?;
        check_field(&node.semantic_type, "semantic type")?;
        Ok(node)
    }
}

/// An image node. The graph stores no pixels; `source_ref` is an opaque
/// locator (path, record id) resolved by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageNode {
    pub image_id: String,
    pub source_ref: String,
}

impl ImageNode {
    pub fn new(
        image_id: impl Into<String>,
        source_ref: impl Into<String>,
    ) -> Result<ImageNode, GraphError> {
        let node = ImageNode {
            image_id: image_id.into(),
            source_ref: source_ref.into(),
        };
        check_id(&node.image_id)?;
        check_field(&node.source_ref, "source ref")?;
        Ok(node)
    }
}

/// A relation type. Intra relations never carry a polarity; cross relations
/// always do.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub relation_id: String,
    pub modality: Modality,
    pub polarity: Option<Polarity>,
}

impl RelationType {
    pub fn intra(relation_id: impl Into<String>) -> Result<RelationType, GraphError> {
        let id = relation_id.into();
        check_id(&id)?;
        Ok(RelationType {
            relation_id: id,
            modality: Modality::Intra,
            polarity: None,
        })
    }

    pub fn cross(polarity: Polarity) -> RelationType {
        RelationType {
            relation_id: polarity.relation_id().to_string(),
            modality: Modality::Cross,
            polarity: Some(polarity),
        }
    }

    /// Cross relation under a caller-chosen id.
    pub fn cross_with_id(
        relation_id: impl Into<String>,
        polarity: Polarity,
    ) -> Result<RelationType, GraphError> {
        let id = relation_id.into();
        check_id(&id)?;
        Ok(RelationType {
            relation_id: id,
            modality: Modality::Cross,
            polarity: Some(polarity),
        })
    }
}

/// A directed (head, relation, tail) edge. Node and relation ids are strings
/// at the storage layer; dense integer ids exist only inside a training
/// session (see the embeddings module).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
    ) -> Triple {
        Triple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// Summary counts and ratios for a graph.
///
/// Ratios are kept at full precision; the `Display` impl rounds to two
/// decimals. Zero denominators yield a ratio of 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub total_edges: usize,
    pub num_concepts: usize,
    pub num_images: usize,
    pub num_relations: usize,
    pub cross_edges: usize,
    pub intra_edges: usize,
    pub image_to_concept_ratio: f64,
    pub avg_edges_per_image: f64,
    pub avg_edges_per_concept: f64,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Total Number of Edges          {:>10}", self.total_edges)?;
        writeln!(f, "Number of Concepts             {:>10}", self.num_concepts)?;
        writeln!(f, "Number of Images               {:>10}", self.num_images)?;
        writeln!(f, "Number of Relations            {:>10}", self.num_relations)?;
        writeln!(f, "Number of Cross-modality Edges {:>10}", self.cross_edges)?;
        writeln!(f, "Number of Intra-modality Edges {:>10}", self.intra_edges)?;
        writeln!(
            f,
            "Image-to-Concept Ratio         {:>10.2}",
            self.image_to_concept_ratio
        )?;
        writeln!(
            f,
            "Average Edges per Image        {:>10.2}",
            self.avg_edges_per_image
        )?;
        write!(
            f,
            "Average Edges per Concept      {:>10.2}",
            self.avg_edges_per_concept
        )
    }
}

/// The multimodal knowledge graph.
///
/// Building is single-writer through the `add_*` methods. Once built, all
/// queries take `&self`, so a shared reference (or `Arc`) can serve any
/// number of concurrent readers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultimodalGraph {
    concepts: BTreeMap<String, ConceptNode>,
    images: BTreeMap<String, ImageNode>,
    relations: BTreeMap<String, RelationType>,
    triples: BTreeSet<Triple>,
    adjacency: BTreeMap<String, BTreeSet<Triple>>,
    pair_index: BTreeMap<(String, String), BTreeSet<String>>,
}

impl MultimodalGraph {
    pub fn new() -> MultimodalGraph {
        MultimodalGraph::default()
    }

    /// Register a concept node. Errors if the id is already taken (by any
    /// node kind) with a different payload.
    pub fn add_concept(&mut self, node: ConceptNode) -> Result<(), GraphError> {
        if self.images.contains_key(&node.cui) {
            return Err(GraphError::NodeConflict {
                id: node.cui,
                reason: "id already registered as an image".into(),
            });
        }
        if let Some(existing) = self.concepts.get(&node.cui) {
            if *existing != node {
                return Err(GraphError::NodeConflict {
                    id: node.cui,
                    reason: "concept already registered with a different payload".into(),
                });
            }
            return Ok(());
        }
        self.concepts.insert(node.cui.clone(), node);
        Ok(())
    }

    /// Register a concept if absent; an existing node under the same id is
    /// kept as-is, even when payloads differ. Returns true on insert.
    pub fn ensure_concept(&mut self, node: ConceptNode) -> Result<bool, GraphError> {
        if self.images.contains_key(&node.cui) {
            return Err(GraphError::NodeConflict {
                id: node.cui,
                reason: "id already registered as an image".into(),
            });
        }
        if self.concepts.contains_key(&node.cui) {
            return Ok(false);
        }
        self.concepts.insert(node.cui.clone(), node);
        Ok(true)
    }

    pub fn add_image(&mut self, node: ImageNode) -> Result<(), GraphError> {
        if self.concepts.contains_key(&node.image_id) {
            return Err(GraphError::NodeConflict {
                id: node.image_id,
                reason: "id already registered as a concept".into(),
            });
        }
        if let Some(existing) = self.images.get(&node.image_id) {
            if *existing != node {
                return Err(GraphError::NodeConflict {
                    id: node.image_id,
                    reason: "image already registered with a different payload".into(),
                });
            }
            return Ok(());
        }
        self.images.insert(node.image_id.clone(), node);
        Ok(())
    }

    /// Register an image if absent; see [`MultimodalGraph::ensure_concept`].
    pub fn ensure_image(&mut self, node: ImageNode) -> Result<bool, GraphError> {
        if self.concepts.contains_key(&node.image_id) {
            return Err(GraphError::NodeConflict {
                id: node.image_id,
                reason: "id already registered as a concept".into(),
            });
        }
        if self.images.contains_key(&node.image_id) {
            return Ok(false);
        }
        self.images.insert(node.image_id.clone(), node);
        Ok(true)
    }

    pub fn add_relation(&mut self, relation: RelationType) -> Result<(), GraphError> {
        match (relation.modality, relation.polarity) {
            (Modality::Intra, Some(_)) => {
                return Err(GraphError::RelationConflict {
                    id: relation.relation_id,
                    reason: "intra relations must not carry a polarity".into(),
                })
            }
            (Modality::Cross, None) => {
                return Err(GraphError::RelationConflict {
                    id: relation.relation_id,
                    reason: "cross relations must carry a polarity".into(),
                })
            }
            _ => {}
        }
        if let Some(existing) = self.relations.get(&relation.relation_id) {
            if *existing != relation {
                return Err(GraphError::RelationConflict {
                    id: relation.relation_id,
                    reason: "relation already registered with a different definition".into(),
                });
            }
            return Ok(());
        }
        self.relations.insert(relation.relation_id.clone(), relation);
        Ok(())
    }

    /// Insert a triple, enforcing modality rules and rejecting duplicates.
    ///
    /// Cross triples connect an image head to a concept tail; intra triples
    /// connect two distinct concepts.
    pub fn add_triple(&mut self, triple: Triple) -> Result<(), GraphError> {
        let relation = self
            .relations
            .get(&triple.relation)
            .ok_or_else(|| GraphError::UnknownRelation(triple.relation.clone()))?;

        match relation.modality {
            Modality::Intra => {
                if self.images.contains_key(&triple.head) {
                    return Err(GraphError::ModalityViolation(format!(
                        "intra triple {triple} has an image head"
                    )));
                }
                if self.images.contains_key(&triple.tail) {
                    return Err(GraphError::ModalityViolation(format!(
                        "intra triple {triple} has an image tail"
                    )));
                }
                if !self.concepts.contains_key(&triple.head) {
                    return Err(GraphError::UnknownNode(triple.head));
                }
                if !self.concepts.contains_key(&triple.tail) {
                    return Err(GraphError::UnknownNode(triple.tail));
                }
                if triple.head == triple.tail {
                    return Err(GraphError::ModalityViolation(format!(
                        "intra triple {triple} is a self-loop; intra edges connect distinct concepts"
                    )));
                }
            }
            Modality::Cross => {
                if self.concepts.contains_key(&triple.head) {
                    return Err(GraphError::ModalityViolation(format!(
                        "cross triple {triple} has a concept head; expected an image"
                    )));
                }
                if !self.images.contains_key(&triple.head) {
                    return Err(GraphError::UnknownNode(triple.head));
                }
                if self.images.contains_key(&triple.tail) {
                    return Err(GraphError::ModalityViolation(format!(
                        "cross triple {triple} has an image tail; expected a concept"
                    )));
                }
                if !self.concepts.contains_key(&triple.tail) {
                    return Err(GraphError::UnknownNode(triple.tail));
                }
            }
        }

        if self.triples.contains(&triple) {
            return Err(GraphError::DuplicateTriple(
                triple.head,
                triple.relation,
                triple.tail,
            ));
        }

        let is_cross = relation.modality == Modality::Cross;
        self.adjacency
            .entry(triple.head.clone())
            .or_default()
            .insert(triple.clone());
        self.adjacency
            .entry(triple.tail.clone())
            .or_default()
            .insert(triple.clone());
        if is_cross {
            self.pair_index
                .entry((triple.relation.clone(), triple.tail.clone()))
                .or_default()
                .insert(triple.head.clone());
        }
        self.triples.insert(triple);
        Ok(())
    }

    pub fn contains_triple(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.concepts.contains_key(id) || self.images.contains_key(id)
    }

    pub fn concept(&self, cui: &str) -> Option<&ConceptNode> {
        self.concepts.get(cui)
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageNode> {
        self.images.get(image_id)
    }

    pub fn relation(&self, relation_id: &str) -> Option<&RelationType> {
        self.relations.get(relation_id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptNode> {
        self.concepts.values()
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageNode> {
        self.images.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationType> {
        self.relations.values()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn num_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    fn is_cross_triple(&self, triple: &Triple) -> bool {
        self.relations
            .get(&triple.relation)
            .map(|r| r.modality == Modality::Cross)
            .unwrap_or(false)
    }

    /// 1-hop neighborhood of a node: the (relation, opposite endpoint) pairs
    /// of its incident triples.
    pub fn neighbors(&self, node: &str) -> Result<BTreeSet<(String, String)>, GraphError> {
        if !self.contains_node(node) {
            return Err(GraphError::UnknownNode(node.to_string()));
        }
        let mut out = BTreeSet::new();
        if let Some(incident) = self.adjacency.get(node) {
            for t in incident {
                let other = if t.head == node { &t.tail } else { &t.head };
                out.insert((t.relation.clone(), other.clone()));
            }
        }
        Ok(out)
    }

    /// Triples incident to a node. Empty for isolated nodes.
    pub fn incident_triples(&self, node: &str) -> impl Iterator<Item = &Triple> {
        self.adjacency.get(node).into_iter().flatten()
    }

    /// Images linked to `concept` through `relation` (cross edges only).
    pub fn images_for_pair(&self, relation: &str, concept: &str) -> Option<&BTreeSet<String>> {
        self.pair_index
            .get(&(relation.to_string(), concept.to_string()))
    }

    /// All (relation, concept) cross pairs with their image sets.
    pub fn cross_pairs(&self) -> impl Iterator<Item = (&(String, String), &BTreeSet<String>)> {
        self.pair_index.iter()
    }

    /// Counts and the derived ratios. Empty denominators give 0 ratios.
    pub fn compute_stats(&self) -> GraphStats {
        let cross_edges = self
            .triples
            .iter()
            .filter(|t| self.is_cross_triple(t))
            .count();
        let total_edges = self.triples.len();
        let intra_edges = total_edges - cross_edges;
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        GraphStats {
            total_edges,
            num_concepts: self.concepts.len(),
            num_images: self.images.len(),
            num_relations: self.relations.len(),
            cross_edges,
            intra_edges,
            image_to_concept_ratio: ratio(self.images.len(), self.concepts.len()),
            avg_edges_per_image: ratio(cross_edges, self.images.len()),
            avg_edges_per_concept: ratio(total_edges, self.concepts.len()),
        }
    }

    /// Verify that every triple endpoint is registered and that both derived
    /// indices equal a fresh rebuild from the triple set.
    pub fn check_consistency(&self) -> Result<(), GraphError> {
        let mut adjacency: BTreeMap<String, BTreeSet<Triple>> = BTreeMap::new();
        let mut pair_index: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
        for t in &self.triples {
            if !self.contains_node(&t.head) {
                return Err(GraphError::UnknownNode(t.head.clone()));
            }
            if !self.contains_node(&t.tail) {
                return Err(GraphError::UnknownNode(t.tail.clone()));
            }
            if !self.relations.contains_key(&t.relation) {
                return Err(GraphError::UnknownRelation(t.relation.clone()));
            }
            adjacency.entry(t.head.clone()).or_default().insert(t.clone());
            adjacency.entry(t.tail.clone()).or_default().insert(t.clone());
            if self.is_cross_triple(t) {
                pair_index
                    .entry((t.relation.clone(), t.tail.clone()))
                    .or_default()
                    .insert(t.head.clone());
            }
        }
        if adjacency != self.adjacency {
            return Err(GraphError::ModalityViolation(
                "adjacency index out of sync with triples".into(),
            ));
        }
        if pair_index != self.pair_index {
            return Err(GraphError::ModalityViolation(
                "pair index out of sync with triples".into(),
            ));
        }
        Ok(())
    }
}

fn is_valid_cui(cui: &str) -> bool {
    let mut chars = cui.chars();
    chars.next() == Some('C') && {
        let rest = chars.as_str();
        !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
    }
}

fn check_id(id: &str) -> Result<(), GraphError> {
    if id.is_empty() {
        return Err(GraphError::InvalidIdentifier(
            id.to_string(),
            "empty identifier".into(),
        ));
    }
    if id.starts_with('#') {
        return Err(GraphError::InvalidIdentifier(
            id.to_string(),
            "identifiers must not start with '#'".into(),
        ));
    }
    check_field(id, "identifier")
}

// TSV columns cannot carry tabs or line breaks; rejecting them here keeps
// the serialized form lossless.
fn check_field(value: &str, what: &str) -> Result<(), GraphError> {
    if value.contains(['\t', '\n', '\r']) {
        return Err(GraphError::InvalidField(
            value.to_string(),
            format!("{what} must not contain tabs or line breaks"),
        ));
    }
    Ok(())
}
