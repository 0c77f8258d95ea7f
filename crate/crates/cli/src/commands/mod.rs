pub mod build;
pub mod evaluate;
pub mod filter;
pub mod gensynth;
pub mod split;
pub mod stats;
pub mod train;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mmkg_core::graph::Triple;

pub const DEFAULT_SEED: u64 = 42;

/// Write triples as TSV, one `head<TAB>relation<TAB>tail` per line.
pub(crate) fn write_triple_file(path: &Path, triples: &[Triple]) -> Result<()> {
    let mut w = BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writeln!(w, "# head_id\trelation_id\ttail_id")?;
    for t in triples {
        writeln!(w, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
    }
    Ok(())
}

/// Read a TSV triple file written by [`write_triple_file`] (or the graph
/// serializer). Lines starting with '#' are comments.
pub(crate) fn read_triple_file(path: &Path) -> Result<Vec<Triple>> {
    let reader = BufReader::new(
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    let mut triples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            bail!(
                "{}:{}: expected 3 tab-separated fields, got {}",
                path.display(),
                idx + 1,
                fields.len()
            );
        }
        triples.push(Triple::new(fields[0], fields[1], fields[2]));
    }
    Ok(triples)
}
