//! Seed-derived coefficient streams.
//!
//! Byte `t` of the stream for seed `(node_id, block_height)` is byte `t % 32` of
//! `SHA-256(node_id_be8 || block_height_be8 || (t / 32)_be8)`. Row `u` of a node's
//! code for one block is the slice `[u*k, (u+1)*k)` of that stream.

use sha2::{Digest, Sha256};

use crate::gf256::FieldMatrix;

const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoefficientSeed {
    pub node_id: u64,
    pub block_height: u64,
}

impl CoefficientSeed {
    pub fn new(node_id: u64, block_height: u64) -> Self {
        CoefficientSeed { node_id, block_height }
    }

    pub fn to_bytes(self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.node_id.to_be_bytes());
        out[8..].copy_from_slice(&self.block_height.to_be_bytes());
        out
    }

    fn chunk(self, counter: u64) -> [u8; CHUNK] {
        let mut h = Sha256::new();
        h.update(self.to_bytes());
        h.update(counter.to_be_bytes());
        h.finalize().into()
    }

    /// Writes stream bytes `start .. start + out.len()` into `out`.
    pub fn fill(self, start: usize, out: &mut [u8]) {
        let mut pos = start;
        let mut written = 0;
        while written < out.len() {
            let block = self.chunk((pos / CHUNK) as u64);
            let offset = pos % CHUNK;
            let take = (CHUNK - offset).min(out.len() - written);
            out[written..written + take].copy_from_slice(&block[offset..offset + take]);
            written += take;
            pos += take;
        }
    }
}

/// The first `count` bytes of the stream.
pub fn coefficient_stream(seed: CoefficientSeed, count: usize) -> Vec<u8> {
    let mut out = vec![0u8; count];
    seed.fill(0, &mut out);
    out
}

/// The `k` coefficients of coded row `row`.
pub fn coefficient_row(seed: CoefficientSeed, k: usize, row: usize) -> Vec<u8> {
    let mut out = vec![0u8; k];
    seed.fill(row * k, &mut out);
    out
}

/// Stacks the requested rows, in the given order, into a `rows.len() x k` matrix.
pub fn coefficient_matrix(seed: CoefficientSeed, k: usize, rows: &[usize]) -> FieldMatrix {
    assert!(k >= 1, "k must be positive");
    let mut data = vec![0u8; rows.len() * k];
    for (chunk, &u) in data.chunks_mut(k).zip(rows) {
        seed.fill(u * k, chunk);
    }
    FieldMatrix::new(rows.len(), k, data).expect("shape is consistent by construction")
}
