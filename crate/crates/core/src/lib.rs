//! Toolkit for building, filtering, and benchmarking multimodal medical
//! knowledge graphs.
//!
//! The graph couples two node kinds (clinical concepts keyed by CUI and
//! radiological images) through two edge kinds: intra-modality edges between
//! concepts, imported from a terminology relation table, and cross-modality
//! edges from images to concepts, each labelled with a polarity (positive,
//! negative, or uncertain stance of the source report).
//!
//! Pipeline stages, each usable on its own:
//!
//! - [`graph`]: typed storage, validation, adjacency indices, TSV round-trip,
//!   and summary statistics.
//! - [`construction`]: ingestion of candidate concept annotations, semantic
//!   type filtering, annotator-based disambiguation, and graph assembly.
//! - [`naf`]: neighbor-aware informativeness scoring of images and greedy
//!   coverage-preserving selection.
//! - [`embeddings`]: eleven link-prediction scoring models with analytic
//!   gradients and a binary checkpoint format.
//! - [`training`]: negative-sampled training with decoupled weight decay,
//!   early stopping, and deterministic splits.
//! - [`evaluation`]: mean rank and Hits@K ranking metrics plus generic
//!   retrieval and classification metrics.
//! - [`synthdata`]: seeded synthetic graph generators for desk-scale
//!   benchmarking, including planted-structure graphs with learnable signal.
//!
//! Build phases are single-writer; a finished [`graph::MultimodalGraph`] is
//! read through shared references and is safe for concurrent readers.

pub mod construction;
pub mod embeddings;
pub mod evaluation;
pub mod graph;
pub mod naf;
pub mod synthdata;
pub mod training;
