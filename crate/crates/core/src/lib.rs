//! Low-storage blockchain node.
//!
//! Instead of keeping whole blocks, a low-storage node splits every block into `k`
//! fragments and keeps only `r` random linear combinations of them over GF(2^8). The
//! combination coefficients are derived from the node's id and the block height, so
//! any node can rebuild a block from roughly `k` coded fragments gathered from peers.
//!
//! Modules, bottom-up:
//! - [`gf256`]: field arithmetic and matrices
//! - [`coeffgen`]: seed-derived coefficient rows
//! - [`codec`]: fragmentation, encoding, decoding and the LSBF fragment format
//! - [`chain`]: a minimal hash-chained block sequence
//! - [`node`]: bootstrap, fragment storage, serving, recovery and pruning
//! - [`analysis`]: closed-form availability and network-load models
//! - [`simnet`]: deterministic in-process network simulator
//! - [`bench`]: encode/decode throughput harness

pub mod analysis;
pub mod bench;
pub mod chain;
pub mod codec;
pub mod coeffgen;
pub mod gf256;
pub mod node;
pub mod simnet;

use sha2::{Digest as _, Sha256};

/// A SHA-256 digest.
pub type Digest = [u8; 32];

pub fn sha256(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}
