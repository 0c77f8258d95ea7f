//! Graph construction from candidate concept annotations.
//!
//! Inputs are JSONL annotation records: per report, the candidate concept
//! mentions produced by an upstream rule-based tagger, together with the
//! report text and the image ids the report describes. The pipeline:
//!
//! 1. extract the FINDINGS/IMPRESSION sections of the report,
//! 2. drop candidates whose semantic type is on the exclusion list,
//! 3. ask an [`AnnotatorClient`] to pick, per mention, the contextually
//!    right concept and its polarity toward the image,
//! 4. emit cross edges (image, polarity, concept) and intra edges between
//!    co-selected concepts that the relation table connects.
//!
//! Disambiguation of independent records may run concurrently; graph
//! assembly is serialized in input order, so equal inputs and a
//! deterministic client always produce the same graph.

mod annotator;

pub use annotator::{AnnotatorClient, FnAnnotator, HttpAnnotator, MockAnnotator, ANNOTATOR_URL_VAR};

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    ConceptNode, GraphError, ImageNode, MultimodalGraph, Polarity, RelationType, Triple,
};

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("annotator unavailable: {0}")]
    AnnotatorUnavailable(String),
    #[error("malformed annotator response: {0}")]
    MalformedResponse(String),
    #[error("record {0} has no mentions left to disambiguate")]
    EmptyRecord(String),
    #[error("invalid record at line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("duplicate report id {0}")]
    DuplicateReport(String),
    #[error("invalid relation table entry at line {line}: {reason}")]
    InvalidTableEntry { line: usize, reason: String },
    #[error("relation id {0} collides with a reserved cross-modality relation")]
    ConflictingRelation(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One candidate concept for a mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub cui: String,
    pub name: String,
    pub semantic_type: String,
}

/// A surface phrase with its span in the report text and its candidate
/// concepts. Candidate mentions may overlap each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub candidates: Vec<Candidate>,
}

/// One report's worth of candidate annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub report_id: String,
    pub image_ids: Vec<String>,
    pub report_text: String,
    pub mentions: Vec<Mention>,
}

impl AnnotationRecord {
    /// Span and candidate invariants. Spans are character offsets.
    pub fn validate(&self) -> Result<(), String> {
        let text_len = self.report_text.chars().count();
        for m in &self.mentions {
            if m.start >= m.end || m.end > text_len {
                return Err(format!(
                    "mention {:?} span ({}, {}) out of bounds for text of {} chars",
                    m.surface, m.start, m.end, text_len
                ));
            }
            if m.candidates.is_empty() {
                return Err(format!("mention {:?} has no candidates", m.surface));
            }
        }
        Ok(())
    }
}

/// Read annotation records from JSONL, one record per line. Blank lines and
/// lines starting with '#' are skipped. Report ids must be unique.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>, ConstructError> {
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(trimmed).map_err(|e| ConstructError::InvalidRecord {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        record.validate().map_err(|reason| ConstructError::InvalidRecord {
            line: idx + 1,
            reason,
        })?;
        if !seen.insert(record.report_id.clone()) {
            return Err(ConstructError::DuplicateReport(record.report_id));
        }
        records.push(record);
    }
    Ok(records)
}

/// The chosen concepts of one record with their polarity labels, plus
/// counters for lines the parser skipped and selections rejected for not
/// being among the record's candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisambiguationResult {
    pub selections: Vec<(String, Polarity)>,
    pub skipped_lines: usize,
    pub rejected_cuis: usize,
}

/// Directed concept-concept relation entries imported from a terminology.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationTable {
    entries: BTreeSet<(String, String, String)>,
    by_pair: BTreeMap<(String, String), Vec<String>>,
}

impl RelationTable {
    pub fn new() -> RelationTable {
        RelationTable::default()
    }

    /// Insert a (cui_a, relation, cui_b) entry. Self-pairs are rejected.
    pub fn insert(
        &mut self,
        cui_a: impl Into<String>,
        relation_id: impl Into<String>,
        cui_b: impl Into<String>,
    ) -> Result<(), ConstructError> {
        let (a, r, b) = (cui_a.into(), relation_id.into(), cui_b.into());
        if a == b {
            return Err(ConstructError::InvalidTableEntry {
                line: 0,
                reason: format!("self-pair ({a}, {r}, {b})"),
            });
        }
        if self.entries.insert((a.clone(), r.clone(), b.clone())) {
            self.by_pair.entry((a, b)).or_default().push(r);
        }
        Ok(())
    }

    /// Parse TSV lines of `cui_a<TAB>relation_id<TAB>cui_b`.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<RelationTable, ConstructError> {
        let mut table = RelationTable::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(ConstructError::InvalidTableEntry {
                    line: idx + 1,
                    reason: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            if fields[0] == fields[2] {
                return Err(ConstructError::InvalidTableEntry {
                    line: idx + 1,
                    reason: "self-pair".into(),
                });
            }
            table.insert(fields[0], fields[1], fields[2])?;
        }
        Ok(table)
    }

    /// Relation ids defined from `a` to `b`, in insertion order.
    pub fn relations_between(&self, a: &str, b: &str) -> &[String] {
        self.by_pair
            .get(&(a.to_string(), b.to_string()))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn relation_ids(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|(_, r, _)| r.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, String, String)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Default semantic-type exclusion list, shipped with the crate.
pub fn default_exclusion_list() -> BTreeSet<String> {
    parse_exclusion_list(include_str!("../../data/excluded_semantic_types.txt"))
}

/// Parse an exclusion list: one semantic type per line, '#' comments.
pub fn parse_exclusion_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Remove candidates whose semantic type is excluded; mentions left with no
/// candidates are dropped. Order is preserved and the pass is idempotent.
pub fn filter_semantic_types(mentions: &[Mention], exclusion: &BTreeSet<String>) -> Vec<Mention> {
    mentions
        .iter()
        .filter_map(|m| {
            let candidates: Vec<Candidate> = m
                .candidates
                .iter()
                .filter(|c| !exclusion.contains(&c.semantic_type))
                .cloned()
                .collect();
            if candidates.is_empty() {
                None
            } else {
                Some(Mention {
                    surface: m.surface.clone(),
                    start: m.start,
                    end: m.end,
                    candidates,
                })
            }
        })
        .collect()
}

fn section_regexes() -> (&'static Regex, &'static Regex) {
    static TARGET: OnceLock<Regex> = OnceLock::new();
    static BOUNDARY: OnceLock<Regex> = OnceLock::new();
    let target = TARGET.get_or_init(|| Regex::new(r"(?i)\b(findings|impression)\s*:").unwrap());
    // Any run of two or more capitalized words (or one all-caps word)
    // followed by a colon ends the previous section.
    let boundary = BOUNDARY.get_or_init(|| Regex::new(r"\b[A-Z][A-Z ]*[A-Z]\s*:").unwrap());
    (target, boundary)
}

/// Extract the FINDINGS and IMPRESSION section bodies, in that order, each
/// trimmed and joined with a newline. Headers match case-insensitively; a
/// section ends at the next all-caps header or at the end of the text.
/// Returns an empty string when neither header occurs.
pub fn extract_report_sections(report_text: &str) -> String {
    let (target, boundary) = section_regexes();
    let mut boundaries: Vec<usize> = boundary
        .find_iter(report_text)
        .map(|m| m.start())
        .chain(target.find_iter(report_text).map(|m| m.start()))
        .collect();
    boundaries.sort_unstable();
    boundaries.dedup();

    let mut findings: Option<&str> = None;
    let mut impression: Option<&str> = None;
    for m in target.find_iter(report_text) {
        let body_start = m.end();
        let body_end = boundaries
            .iter()
            .copied()
            .find(|&b| b >= body_start)
            .unwrap_or(report_text.len());
        let body = report_text[body_start..body_end].trim();
        let header = report_text[m.start()..m.end()].to_ascii_lowercase();
        if header.starts_with("findings") {
            if findings.is_none() {
                findings = Some(body);
            }
        } else if impression.is_none() {
            impression = Some(body);
        }
    }
    [findings, impression]
        .into_iter()
        .flatten()
        .filter(|b| !b.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

const BLOCK_START: &str = "***start***";
const BLOCK_END: &str = "***end***";

/// Parsed output block of an annotator response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedBlock {
    pub selections: Vec<(String, Polarity)>,
    pub skipped_lines: usize,
}

/// Extract the first `***start***`/`***end***` block from a raw response
/// and parse lines of the form `(C<digits>, <Polarity>)`.
///
/// Surrounding whitespace is tolerated and polarity labels match
/// case-insensitively. Lines that do not parse are skipped and counted.
/// Responses without a complete block are malformed.
pub fn parse_annotator_block(raw: &str) -> Result<ParsedBlock, ConstructError> {
    static LINE: OnceLock<Regex> = OnceLock::new();
    let line_re = LINE.get_or_init(|| {
        Regex::new(r"^\(\s*(C\d+)\s*,\s*([A-Za-z]+)\s*\)$").unwrap()
    });

    let start = raw
        .find(BLOCK_START)
        .ok_or_else(|| ConstructError::MalformedResponse("missing start delimiter".into()))?;
    let after_start = start + BLOCK_START.len();
    let end_offset = raw[after_start..]
        .find(BLOCK_END)
        .ok_or_else(|| ConstructError::MalformedResponse("missing end delimiter".into()))?;
    let block = &raw[after_start..after_start + end_offset];

    let mut selections = Vec::new();
    let mut skipped_lines = 0;
    for line in block.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line_re.captures(line) {
            Some(caps) => match Polarity::parse(&caps[2]) {
                Some(polarity) => selections.push((caps[1].to_string(), polarity)),
                None => skipped_lines += 1,
            },
            None => skipped_lines += 1,
        }
    }
    Ok(ParsedBlock {
        selections,
        skipped_lines,
    })
}

/// Render the disambiguation request for one record.
///
/// By default the annotator sees the extracted FINDINGS/IMPRESSION sections;
/// `full_report` sends the whole text instead. Reports in which no section
/// header is found also fall back to the full text.
pub fn build_prompt(record: &AnnotationRecord, full_report: bool) -> String {
    let sections = if full_report {
        String::new()
    } else {
        extract_report_sections(&record.report_text)
    };
    let report = if full_report || sections.is_empty() {
        record.report_text.as_str()
    } else {
        sections.as_str()
    };
    let mut candidates = String::new();
    for m in &record.mentions {
        candidates.push_str(&format!("\n- \"{}\":", m.surface));
        for (i, c) in m.candidates.iter().enumerate() {
            if i > 0 {
                candidates.push(';');
            }
            candidates.push_str(&format!(" ({}, {}, {})", c.cui, c.name, c.semantic_type));
        }
    }
    format!(
        "Report Text: {report}\n\
         \n\
         Candidate Concepts: {candidates}\n\
         \n\
         For each phrase, evaluate the concept candidates and select the most relevant concept \
         based on the context provided in the report. Your decision should account for the \
         specific context of a radiological image.\n\
         \n\
         After selecting the appropriate concept for each phrase, classify the relation between \
         the selected concept and the image using the following categories:\n\
         \n\
         Positive - The concept is clearly represented in the image (e.g., anatomical \
         structures, specific findings).\n\
         Neutral - Concepts that are structural, general terms (like \"findings\", \"normal\", \
         \"changes\"), meta-concepts, adjectives, or unrelated to clinical insight.\n\
         Negative - The concept is the opposite of what is shown in the image (e.g., when the \
         image shows no abnormalities but the concept implies pathology).\n\
         Uncertain - The concept's presence in the image is unclear based on the report (e.g., \
         the reporter uses language like \"possible\" or \"could be\").\n\
         \n\
         Return only concepts with a positive, negative, or uncertain relation. Do not include \
         any neutral concepts in the final output.\n\
         \n\
         Provide the final output in the following format:\n\
         {BLOCK_START}\n\
         (Concept ID only (digits start with C), Relation)\n\
         {BLOCK_END}\n\
         \n\
         Ensure that:\n\
         - Neutral concepts are excluded entirely from the output.\n\
         - Concepts like \"findings\" and any general or structural terms are categorized as \
         neutral and omitted.\n\
         - Double-check that each remaining concept is evaluated accurately based on the \
         context of the radiological image.\n"
    )
}

/// Ask the annotator to disambiguate one record.
///
/// Selections whose CUI is not among the record's candidates are rejected
/// and counted; repeated CUIs keep their first polarity. Neutral concepts
/// never appear because only the three polarity labels parse.
pub fn disambiguate<C: AnnotatorClient + ?Sized>(
    record: &AnnotationRecord,
    client: &C,
    full_report: bool,
) -> Result<DisambiguationResult, ConstructError> {
    if record.mentions.is_empty() {
        return Err(ConstructError::EmptyRecord(record.report_id.clone()));
    }
    let prompt = build_prompt(record, full_report);
    let response = client.complete(&prompt)?;
    let block = parse_annotator_block(&response)?;

    let allowed: BTreeSet<&str> = record
        .mentions
        .iter()
        .flat_map(|m| m.candidates.iter().map(|c| c.cui.as_str()))
        .collect();
    let mut seen = BTreeSet::new();
    let mut selections = Vec::new();
    let mut rejected_cuis = 0;
    for (cui, polarity) in block.selections {
        if !allowed.contains(cui.as_str()) {
            rejected_cuis += 1;
            continue;
        }
        if seen.insert(cui.clone()) {
            selections.push((cui, polarity));
        }
    }
    Ok(DisambiguationResult {
        selections,
        skipped_lines: block.skipped_lines,
        rejected_cuis,
    })
}

/// How intra edges are materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntraMode {
    /// Only between concepts co-selected for the same record.
    PerRecord,
    /// Between any two selected concepts anywhere in the graph.
    Global,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub intra_mode: IntraMode,
    pub full_report: bool,
}

impl Default for BuildOptions {
    fn default() -> BuildOptions {
        BuildOptions {
            intra_mode: IntraMode::PerRecord,
            full_report: false,
        }
    }
}

/// Counters and per-record failures from a build run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub records_total: usize,
    pub records_succeeded: usize,
    pub records_skipped_empty: usize,
    pub cross_edges_added: usize,
    pub intra_edges_added: usize,
    pub duplicates_skipped: usize,
    pub parse_lines_skipped: usize,
    pub rejected_cuis: usize,
    pub failures: Vec<(String, String)>,
}

/// Assemble a graph from pre-filtered records.
///
/// Per-record annotator failures skip the record and are reported, not
/// fatal. Cross edges attach every selected concept to every image of the
/// record; intra edges come from the relation table per `opts.intra_mode`.
/// Duplicate triples across records collapse to one edge.
pub fn build_graph<C: AnnotatorClient + Sync + ?Sized>(
    records: &[AnnotationRecord],
    table: &RelationTable,
    client: &C,
    opts: &BuildOptions,
) -> Result<(MultimodalGraph, BuildReport), ConstructError> {
    let mut graph = MultimodalGraph::new();
    for p in Polarity::ALL {
        graph.add_relation(RelationType::cross(p))?;
    }
    for rel in table.relation_ids() {
        if Polarity::parse(rel).is_some() {
            return Err(ConstructError::ConflictingRelation(rel.to_string()));
        }
        graph.add_relation(RelationType::intra(rel)?)?;
    }

    let mut report = BuildReport {
        records_total: records.len(),
        ..BuildReport::default()
    };

    // Client calls are independent and may fan out; assembly below stays in
    // input order so deduplication is reproducible.
    let results: Vec<Option<Result<DisambiguationResult, ConstructError>>> = records
        .par_iter()
        .map(|r| {
            if r.mentions.is_empty() {
                None
            } else {
                Some(disambiguate(r, client, opts.full_report))
            }
        })
        .collect();

    let mut seen_reports = BTreeSet::new();
    for (record, result) in records.iter().zip(results) {
        if !seen_reports.insert(record.report_id.as_str()) {
            report
                .failures
                .push((record.report_id.clone(), "duplicate report id".into()));
            continue;
        }
        let result = match result {
            None => {
                report.records_skipped_empty += 1;
                continue;
            }
            Some(Err(e)) => {
                report.failures.push((record.report_id.clone(), e.to_string()));
                continue;
            }
            Some(Ok(r)) => r,
        };
        report.parse_lines_skipped += result.skipped_lines;
        report.rejected_cuis += result.rejected_cuis;

        for (cui, _) in &result.selections {
            let candidate = record
                .mentions
                .iter()
                .flat_map(|m| m.candidates.iter())
                .find(|c| &c.cui == cui)
                .expect("selection validated against candidates");
            graph.ensure_concept(ConceptNode::new(
                candidate.cui.clone(),
                candidate.name.clone(),
                candidate.semantic_type.clone(),
            )?)?;
        }
        for image_id in &record.image_ids {
            graph.ensure_image(ImageNode::new(image_id.clone(), record.report_id.clone())?)?;
            for (cui, polarity) in &result.selections {
                let triple = Triple::new(image_id.clone(), polarity.relation_id(), cui.clone());
                if graph.contains_triple(&triple) {
                    report.duplicates_skipped += 1;
                } else {
                    graph.add_triple(triple)?;
                    report.cross_edges_added += 1;
                }
            }
        }

        if opts.intra_mode == IntraMode::PerRecord {
            let selected: BTreeSet<&str> =
                result.selections.iter().map(|(c, _)| c.as_str()).collect();
            for a in &selected {
                for b in &selected {
                    if a == b {
                        continue;
                    }
                    for rel in table.relations_between(a, b) {
                        let triple = Triple::new(*a, rel.clone(), *b);
                        if graph.contains_triple(&triple) {
                            report.duplicates_skipped += 1;
                        } else {
                            graph.add_triple(triple)?;
                            report.intra_edges_added += 1;
                        }
                    }
                }
            }
        }
        report.records_succeeded += 1;
    }

    if opts.intra_mode == IntraMode::Global {
        for (a, rel, b) in table.iter() {
            if graph.concept(a).is_some() && graph.concept(b).is_some() {
                let triple = Triple::new(a.clone(), rel.clone(), b.clone());
                if !graph.contains_triple(&triple) {
                    graph.add_triple(triple)?;
                    report.intra_edges_added += 1;
                }
            }
        }
    }

    Ok((graph, report))
}

#[cfg(test)]
mod tests;
