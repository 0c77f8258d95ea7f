//! Model checkpoints: a JSON header followed by raw little-endian f32
//! parameter blocks, one per group, in declaration order.
//!
//! Layout: 4 magic bytes `MMKG`, a little-endian u32 header length, the JSON
//! header, then the blocks. The header pins the model kind, dimension,
//! vocabulary hash, seed, and the exact group shapes, and loading validates
//! all of them. Parameters are held as f64 in memory and rounded to f32 on
//! disk.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{group_specs, EmbedError, ModelKind, ModelState, ParamGroup};

const MAGIC: &[u8; 4] = b"MMKG";

#[derive(Debug, Serialize, Deserialize)]
struct GroupHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    model_kind: ModelKind,
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
    vocab_hash: String,
    groups: Vec<GroupHeader>,
}

/// Serialize a model state into `w`.
pub fn write_checkpoint<W: Write>(state: &ModelState, mut w: W) -> Result<(), EmbedError> {
    let header = CheckpointHeader {
        model_kind: state.kind,
        dim: state.dim,
        num_entities: state.num_entities,
        num_relations: state.num_relations,
        seed: state.seed,
        vocab_hash: state.vocab_hash.clone(),
        groups: state
            .groups
            .iter()
            .map(|g| GroupHeader {
                name: g.name.to_string(),
                rows: g.rows,
                cols: g.cols,
            })
            .collect(),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| EmbedError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for g in &state.groups {
        let mut block = Vec::with_capacity(g.data.len() * 4);
        for &v in &g.data {
            block.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&block)?;
    }
    Ok(())
}

/// Deserialize a model state from `r`, validating shapes against the model
/// kind declared in the header.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelState, EmbedError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(EmbedError::Checkpoint("bad magic bytes".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| EmbedError::Checkpoint(format!("bad header: {e}")))?;

    let expected = group_specs(
        header.model_kind,
        header.dim,
        header.num_entities,
        header.num_relations,
    );
    if expected.len() != header.groups.len() {
        return Err(EmbedError::Checkpoint(format!(
            "expected {} parameter groups, header declares {}",
            expected.len(),
            header.groups.len()
        )));
    }
    let mut groups = Vec::new();
    for ((name, rows, cols), gh) in expected.into_iter().zip(&header.groups) {
        if gh.name != name || gh.rows != rows || gh.cols != cols {
            return Err(EmbedError::Checkpoint(format!(
                "group mismatch: expected {name} [{rows} x {cols}], header has {} [{} x {}]",
                gh.name, gh.rows, gh.cols
            )));
        }
        let mut block = vec![0u8; rows * cols * 4];
        r.read_exact(&mut block)?;
        let data: Vec<f64> = block
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        groups.push(ParamGroup {
            name,
            rows,
            cols,
            data,
        });
    }
    Ok(ModelState {
        kind: header.model_kind,
        dim: header.dim,
        num_entities: header.num_entities,
        num_relations: header.num_relations,
        seed: header.seed,
        vocab_hash: header.vocab_hash,
        groups,
    })
}

pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<(), EmbedError> {
    write_checkpoint(state, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState, EmbedError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{init_model, VocabIndex};

    fn vocab() -> VocabIndex {
        VocabIndex::from_parts(
            (0..5).map(|i| format!("e{i}")).collect(),
            (0..2).map(|i| format!("r{i}")).collect(),
        )
    }

    #[test]
    fn roundtrip_preserves_f32_rounded_parameters() {
        for kind in ModelKind::ALL {
            let state = init_model(kind, 4, &vocab(), 42).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&state, &mut buf).unwrap();
            let loaded = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(loaded.kind, kind);
            assert_eq!(loaded.dim, 4);
            assert_eq!(loaded.vocab_hash, state.vocab_hash);
            assert_eq!(loaded.seed, 42);
            for (a, b) in state.groups.iter().zip(loaded.groups.iter()) {
                assert_eq!(a.name, b.name);
                for (x, y) in a.data.iter().zip(b.data.iter()) {
                    assert_eq!(*x as f32, *y as f32, "{kind} {}", a.name);
                }
            }
        }
    }

    #[test]
    fn serialization_is_byte_stable() {
        let state = init_model(ModelKind::ComplEx, 4, &vocab(), 7).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_checkpoint(&state, &mut a).unwrap();
        write_checkpoint(&state, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(matches!(
            read_checkpoint(&b"NOPE"[..]),
            Err(EmbedError::Checkpoint(_))
        ));
        let state = init_model(ModelKind::TransE, 4, &vocab(), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&state, &mut buf).unwrap();
        // Truncated parameter block.
        buf.truncate(buf.len() - 5);
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
