//! Binary checkpoint format.
//!
//! Layout: magic `KGAL`, a format version byte, the embedding width as a
//! 4-byte little-endian unsigned, the joint node count as an 8-byte
//! little-endian unsigned, then the payload as little-endian 32-bit floats
//! (input table rows, encoder parameters, proxy vectors), and finally an
//! 8-byte checksum: the sum of all payload bytes modulo 2^64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::encoder::{EmbeddingState, EncoderParams, RelGates};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"KGAL";
const VERSION: u8 = 1;

struct PayloadWriter<W: Write> {
    inner: W,
    checksum: u64,
}

impl<W: Write> PayloadWriter<W> {
    fn put_f32s(&mut self, path: &Path, values: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(values.len() * 4);
        for &v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for &b in &buf {
            self.checksum = self.checksum.wrapping_add(b as u64);
        }
        self.inner.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// Serialize the input table and encoder parameters.
pub fn write_checkpoint(path: &Path, state: &EmbeddingState) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_all(&[VERSION]).map_err(|e| Error::io(path, e))?;
    w.write_all(&(state.dim as u32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    let node_count = state.input_table.len() / state.dim;
    w.write_all(&(node_count as u64).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;

    let mut pw = PayloadWriter {
        inner: w,
        checksum: 0,
    };
    pw.put_f32s(path, &state.input_table)?;
    pw.put_f32s(path, &state.params.w1)?;
    pw.put_f32s(path, &state.params.w2)?;
    pw.put_f32s(path, &state.params.gates.source_out)?;
    pw.put_f32s(path, &state.params.gates.source_in)?;
    pw.put_f32s(path, &state.params.gates.target_out)?;
    pw.put_f32s(path, &state.params.gates.target_in)?;
    pw.put_f32s(path, &state.params.proxies)?;
    let checksum = pw.checksum;
    let mut w = pw.inner;
    w.write_all(&checksum.to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Shapes the caller must know to parse the payload: the raw format stores
/// only floats after the header.
#[derive(Debug, Clone, Copy)]
pub struct CheckpointShape {
    pub n_proxies: usize,
    pub n_source_rels: usize,
    pub n_target_rels: usize,
}

/// Load a checkpoint written by [`write_checkpoint`]. Verifies magic,
/// version, dimensions, payload length and checksum.
pub fn read_checkpoint(
    path: &Path,
    expected_nodes: usize,
    shape: CheckpointShape,
) -> Result<EmbeddingState> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::Runtime(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version).map_err(|e| Error::io(path, e))?;
    if version[0] != VERSION {
        return Err(Error::Runtime(format!(
            "unsupported checkpoint version {}",
            version[0]
        )));
    }
    let mut dim_bytes = [0u8; 4];
    r.read_exact(&mut dim_bytes).map_err(|e| Error::io(path, e))?;
    let dim = u32::from_le_bytes(dim_bytes) as usize;
    let mut count_bytes = [0u8; 8];
    r.read_exact(&mut count_bytes)
        .map_err(|e| Error::io(path, e))?;
    let node_count = u64::from_le_bytes(count_bytes) as usize;
    if node_count != expected_nodes {
        return Err(Error::Runtime(format!(
            "checkpoint holds {node_count} nodes but the merged graph has {expected_nodes}"
        )));
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() < 8 {
        return Err(Error::Runtime("checkpoint truncated".into()));
    }
    let checksum_bytes: [u8; 8] = payload[payload.len() - 8..].try_into().unwrap();
    let stored = u64::from_le_bytes(checksum_bytes);
    payload.truncate(payload.len() - 8);
    let computed = payload
        .iter()
        .fold(0u64, |acc, &b| acc.wrapping_add(b as u64));
    if stored != computed {
        return Err(Error::Runtime(format!(
            "checkpoint checksum mismatch: stored {stored}, computed {computed}"
        )));
    }

    let expected_floats = node_count * dim
        + 2 * dim * dim
        + 2 * shape.n_source_rels * dim
        + 2 * shape.n_target_rels * dim
        + shape.n_proxies * dim;
    if payload.len() != expected_floats * 4 {
        return Err(Error::Runtime(format!(
            "checkpoint payload holds {} bytes, expected {}",
            payload.len(),
            expected_floats * 4
        )));
    }

    let mut offset = 0usize;
    let mut take = |count: usize| {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let bytes: [u8; 4] = payload[offset..offset + 4].try_into().unwrap();
            out.push(f32::from_le_bytes(bytes) as f64);
            offset += 4;
        }
        out
    };
    let input_table = take(node_count * dim);
    let w1 = take(dim * dim);
    let w2 = take(dim * dim);
    let source_out = take(shape.n_source_rels * dim);
    let source_in = take(shape.n_source_rels * dim);
    let target_out = take(shape.n_target_rels * dim);
    let target_in = take(shape.n_target_rels * dim);
    let proxies = take(shape.n_proxies * dim);

    Ok(EmbeddingState {
        dim,
        input_table,
        params: EncoderParams {
            dim,
            n_proxies: shape.n_proxies,
            w1,
            w2,
            proxies,
            gates: RelGates {
                dim,
                source_out,
                source_in,
                target_out,
                target_in,
            },
        },
        outputs: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> EmbeddingState {
        EmbeddingState::init(10, 4, 3, 2, 2, 11)
    }

    #[test]
    fn round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        let s = state();
        write_checkpoint(&path, &s).unwrap();
        let shape = CheckpointShape {
            n_proxies: 3,
            n_source_rels: 2,
            n_target_rels: 2,
        };
        let loaded = read_checkpoint(&path, 10, shape).unwrap();
        assert_eq!(loaded.dim, 4);
        for (a, b) in s.input_table.iter().zip(loaded.input_table.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
        for (a, b) in s.params.proxies.iter().zip(loaded.params.proxies.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn corrupted_byte_fails_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        write_checkpoint(&path, &state()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] = bytes[mid].wrapping_add(3);
        std::fs::write(&path, &bytes).unwrap();
        let shape = CheckpointShape {
            n_proxies: 3,
            n_source_rels: 2,
            n_target_rels: 2,
        };
        assert!(read_checkpoint(&path, 10, shape).is_err());
    }

    #[test]
    fn header_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        write_checkpoint(&path, &state()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"KGAL");
        assert_eq!(bytes[4], 1);
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bytes[9..17].try_into().unwrap()), 10);
    }

    #[test]
    fn wrong_node_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        write_checkpoint(&path, &state()).unwrap();
        let shape = CheckpointShape {
            n_proxies: 3,
            n_source_rels: 2,
            n_target_rels: 2,
        };
        assert!(read_checkpoint(&path, 11, shape).is_err());
    }
}
