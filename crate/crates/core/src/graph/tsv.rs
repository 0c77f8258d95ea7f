//! TSV serialization of a graph as three companion files.
//!
//! - nodes: `node_id<TAB>kind(CONCEPT|IMAGE)<TAB>name<TAB>semantic_type_or_empty`
//!   (for images the name column holds the opaque source ref)
//! - relations: `relation_id<TAB>modality(INTRA|CROSS)<TAB>polarity_or_empty`
//! - triples: `head_id<TAB>relation_id<TAB>tail_id`
//!
//! Files are UTF-8, lines starting with '#' are comments, and writing is
//! ordered so identical graphs serialize byte-identically.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{
    ConceptNode, GraphError, ImageNode, Modality, MultimodalGraph, Polarity, RelationType, Triple,
};

pub const NODES_FILE: &str = "nodes.tsv";
pub const RELATIONS_FILE: &str = "relations.tsv";
pub const TRIPLES_FILE: &str = "triples.tsv";

pub fn write_nodes<W: Write>(graph: &MultimodalGraph, mut w: W) -> Result<(), GraphError> {
    writeln!(w, "# node_id\tkind\tname\tsemantic_type")?;
    for c in graph.concepts() {
        writeln!(w, "{}\tCONCEPT\t{}\t{}", c.cui, c.name, c.semantic_type)?;
    }
    for i in graph.images() {
        writeln!(w, "{}\tIMAGE\t{}\t", i.image_id, i.source_ref)?;
    }
    Ok(())
}

pub fn write_relations<W: Write>(graph: &MultimodalGraph, mut w: W) -> Result<(), GraphError> {
    writeln!(w, "# relation_id\tmodality\tpolarity")?;
    for r in graph.relations() {
        let modality = match r.modality {
            Modality::Intra => "INTRA",
            Modality::Cross => "CROSS",
        };
        let polarity = r.polarity.map(|p| p.as_str()).unwrap_or("");
        writeln!(w, "{}\t{}\t{}", r.relation_id, modality, polarity)?;
    }
    Ok(())
}

pub fn write_triples<W: Write>(graph: &MultimodalGraph, mut w: W) -> Result<(), GraphError> {
    writeln!(w, "# head_id\trelation_id\ttail_id")?;
    for t in graph.triples() {
        writeln!(w, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
    }
    Ok(())
}

/// Serialize a graph to the three writers.
pub fn write_graph<W1: Write, W2: Write, W3: Write>(
    graph: &MultimodalGraph,
    nodes: W1,
    relations: W2,
    triples: W3,
) -> Result<(), GraphError> {
    write_nodes(graph, nodes)?;
    write_relations(graph, relations)?;
    write_triples(graph, triples)?;
    Ok(())
}

/// Parse a graph from the three readers. Node and relation files must be
/// read before triples can validate, hence the fixed argument order.
pub fn read_graph<R1: BufRead, R2: BufRead, R3: BufRead>(
    nodes: R1,
    relations: R2,
    triples: R3,
) -> Result<MultimodalGraph, GraphError> {
    let mut graph = MultimodalGraph::new();
    read_nodes_into(&mut graph, nodes)?;
    read_relations_into(&mut graph, relations)?;
    read_triples_into(&mut graph, triples)?;
    Ok(graph)
}

fn content_lines<R: BufRead>(
    reader: R,
) -> impl Iterator<Item = Result<(usize, String), GraphError>> {
    reader
        .lines()
        .enumerate()
        .map(|(idx, line)| Ok((idx + 1, line?)))
        .filter(|item| match item {
            Ok((_, line)) => !(line.is_empty() || line.starts_with('#')),
            Err(_) => true,
        })
}

fn parse_err(line: usize, reason: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        reason: reason.into(),
    }
}

fn read_nodes_into<R: BufRead>(graph: &mut MultimodalGraph, reader: R) -> Result<(), GraphError> {
    for item in content_lines(reader) {
        let (line_no, line) = item?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        match fields[1] {
            "CONCEPT" => {
                let node = ConceptNode::new(fields[0], fields[2], fields[3])
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
                graph
                    .add_concept(node)
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
            }
            "IMAGE" => {
                if !fields[3].is_empty() {
                    return Err(parse_err(line_no, "image rows must leave the semantic type empty"));
                }
                let node = ImageNode::new(fields[0], fields[2])
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
                graph
                    .add_image(node)
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
            }
            other => {
                return Err(parse_err(
                    line_no,
                    format!("unknown node kind {other:?}; expected CONCEPT or IMAGE"),
                ))
            }
        }
    }
    Ok(())
}

fn read_relations_into<R: BufRead>(
    graph: &mut MultimodalGraph,
    reader: R,
) -> Result<(), GraphError> {
    for item in content_lines(reader) {
        let (line_no, line) = item?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                line_no,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        let relation = match fields[1] {
            "INTRA" => {
                if !fields[2].is_empty() {
                    return Err(parse_err(line_no, "intra relations must not carry a polarity"));
                }
                RelationType::intra(fields[0]).map_err(|e| parse_err(line_no, e.to_string()))?
            }
            "CROSS" => {
                let polarity = Polarity::parse(fields[2]).ok_or_else(|| {
                    parse_err(line_no, format!("unknown polarity {:?}", fields[2]))
                })?;
                RelationType::cross_with_id(fields[0], polarity)
                    .map_err(|e| parse_err(line_no, e.to_string()))?
            }
            other => {
                return Err(parse_err(
                    line_no,
                    format!("unknown modality {other:?}; expected INTRA or CROSS"),
                ))
            }
        };
        graph
            .add_relation(relation)
            .map_err(|e| parse_err(line_no, e.to_string()))?;
    }
    Ok(())
}

fn read_triples_into<R: BufRead>(graph: &mut MultimodalGraph, reader: R) -> Result<(), GraphError> {
    for item in content_lines(reader) {
        let (line_no, line) = item?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                line_no,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        graph
            .add_triple(Triple::new(fields[0], fields[1], fields[2]))
            .map_err(|e| parse_err(line_no, e.to_string()))?;
    }
    Ok(())
}

fn in_file(name: &str, err: GraphError) -> GraphError {
    GraphError::ParseIn {
        context: name.to_string(),
        source: Box::new(err),
    }
}

/// Write `nodes.tsv`, `relations.tsv`, and `triples.tsv` into `dir`,
/// creating it if needed.
pub fn save_graph_dir(graph: &MultimodalGraph, dir: &Path) -> Result<(), GraphError> {
    fs::create_dir_all(dir)?;
    let open = |name: &str| -> Result<BufWriter<fs::File>, GraphError> {
        Ok(BufWriter::new(fs::File::create(dir.join(name))?))
    };
    write_nodes(graph, open(NODES_FILE)?).map_err(|e| in_file(NODES_FILE, e))?;
    write_relations(graph, open(RELATIONS_FILE)?).map_err(|e| in_file(RELATIONS_FILE, e))?;
    write_triples(graph, open(TRIPLES_FILE)?).map_err(|e| in_file(TRIPLES_FILE, e))?;
    Ok(())
}

/// Load a graph from a directory written by [`save_graph_dir`].
pub fn load_graph_dir(dir: &Path) -> Result<MultimodalGraph, GraphError> {
    let open = |name: &str| -> Result<BufReader<fs::File>, GraphError> {
        fs::File::open(dir.join(name))
            .map(BufReader::new)
            .map_err(GraphError::Io)
    };
    let mut graph = MultimodalGraph::new();
    read_nodes_into(&mut graph, open(NODES_FILE)?).map_err(|e| in_file(NODES_FILE, e))?;
    read_relations_into(&mut graph, open(RELATIONS_FILE)?)
        .map_err(|e| in_file(RELATIONS_FILE, e))?;
    read_triples_into(&mut graph, open(TRIPLES_FILE)?).map_err(|e| in_file(TRIPLES_FILE, e))?;
    Ok(graph)
}
