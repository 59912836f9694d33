//! A minimal hash-chained block sequence used as the fixture every node stores.
//!
//! Header hash is `SHA-256(height_be8 || prev_hash || payload_hash)`; genesis links to
//! 32 zero bytes.
//!
//! The export format is a plain concatenation of records
//! `height u64 | prev_hash [32] | payload_hash [32] | payload_len u32 | payload`,
//! big-endian, ending at EOF.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::{sha256, Digest};

pub const ZERO_HASH: Digest = [0u8; 32];

/// Bytes of the fixed part of an exported block record.
pub const BLOCK_RECORD_HEADER: usize = 8 + 32 + 32 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub payload_hash: Digest,
}

impl BlockHeader {
    pub const ENCODED_LEN: usize = 72;

    pub fn hash(&self) -> Digest {
        sha256(&self.to_bytes())
    }

    pub fn to_bytes(&self) -> [u8; Self::ENCODED_LEN] {
        let mut out = [0u8; Self::ENCODED_LEN];
        out[..8].copy_from_slice(&self.height.to_be_bytes());
        out[8..40].copy_from_slice(&self.prev_hash);
        out[40..].copy_from_slice(&self.payload_hash);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        if b.len() != Self::ENCODED_LEN {
            return None;
        }
        Some(BlockHeader {
            height: u64::from_be_bytes(b[..8].try_into().ok()?),
            prev_hash: b[8..40].try_into().ok()?,
            payload_hash: b[40..].try_into().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub payload: Vec<u8>,
}

impl AsRef<Block> for Block {
    fn as_ref(&self) -> &Block {
        self
    }
}

impl Block {
    /// Creates the block at `height` that follows a header with hash `prev_hash`.
    pub fn new(height: u64, prev_hash: Digest, payload: Vec<u8>) -> Self {
        let header = BlockHeader { height, prev_hash, payload_hash: sha256(&payload) };
        Block { header, payload }
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn hash(&self) -> Digest {
        self.header.hash()
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(&self.header.to_bytes())?;
        let len = u32::try_from(self.payload.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "payload exceeds u32"))?;
        out.write_all(&len.to_be_bytes())?;
        out.write_all(&self.payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ChainFault {
    #[error("height {found} at position {at}")]
    HeightGap { at: u64, found: u64 },
    #[error("block {at} does not link to its predecessor")]
    BrokenLink { at: u64 },
    #[error("block {at} payload does not match its hash")]
    PayloadMismatch { at: u64 },
}

impl ChainFault {
    /// Position in the chain of the first bad block.
    pub fn height(&self) -> u64 {
        match *self {
            ChainFault::HeightGap { at, .. }
            | ChainFault::BrokenLink { at }
            | ChainFault::PayloadMismatch { at } => at,
        }
    }
}

/// Checks `block` as the successor of `prev` (or as genesis when `prev` is `None`).
pub fn validate_next(prev: Option<&BlockHeader>, block: &Block) -> Result<(), ChainFault> {
    let expected_height = prev.map_or(0, |p| p.height + 1);
    if block.header.height != expected_height {
        return Err(ChainFault::HeightGap { at: expected_height, found: block.header.height });
    }
    let expected_prev = prev.map_or(ZERO_HASH, BlockHeader::hash);
    if block.header.prev_hash != expected_prev {
        return Err(ChainFault::BrokenLink { at: expected_height });
    }
    if sha256(&block.payload) != block.header.payload_hash {
        return Err(ChainFault::PayloadMismatch { at: expected_height });
    }
    Ok(())
}

pub fn validate_chain(blocks: &[Block]) -> Result<(), ChainFault> {
    let mut prev: Option<&BlockHeader> = None;
    for b in blocks {
        validate_next(prev, b)?;
        prev = Some(&b.header);
    }
    Ok(())
}

/// Deterministic pseudo-random chain with payload sizes drawn from `min_payload..=max_payload`.
pub fn build_chain(seed: u64, length: usize, min_payload: usize, max_payload: usize) -> Vec<Block> {
    assert!(min_payload <= max_payload, "empty size range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<Block> = Vec::with_capacity(length);
    for height in 0..length as u64 {
        let len = rng.gen_range(min_payload..=max_payload);
        let mut payload = vec![0u8; len];
        rng.fill(payload.as_mut_slice());
        let prev = blocks.last().map_or(ZERO_HASH, Block::hash);
        blocks.push(Block::new(height, prev, payload));
    }
    blocks
}

pub fn write_chain<'a, W: Write>(blocks: impl IntoIterator<Item = &'a Block>, out: &mut W) -> io::Result<()> {
    for b in blocks {
        b.write_to(out)?;
    }
    Ok(())
}

/// Streams blocks out of an exported chain one at a time.
pub struct ChainReader<R> {
    input: R,
    max_payload: usize,
}

impl<R: Read> ChainReader<R> {
    pub fn new(input: R) -> Self {
        ChainReader { input, max_payload: u32::MAX as usize }
    }

    /// Rejects records whose declared payload exceeds `max` before allocating.
    pub fn with_max_payload(mut self, max: usize) -> Self {
        self.max_payload = max;
        self
    }

    fn read_block(&mut self) -> io::Result<Option<Block>> {
        let mut head = [0u8; BLOCK_RECORD_HEADER];
        let mut filled = 0;
        while filled < head.len() {
            match self.input.read(&mut head[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        let header = BlockHeader::from_bytes(&head[..BlockHeader::ENCODED_LEN]).expect("fixed size");
        let len = u32::from_be_bytes(head[72..76].try_into().unwrap()) as usize;
        if len > self.max_payload {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("block {} declares {len} payload bytes", header.height),
            ));
        }
        let mut payload = vec![0u8; len];
        self.input.read_exact(&mut payload)?;
        Ok(Some(Block { header, payload }))
    }
}

impl<R: Read> Iterator for ChainReader<R> {
    type Item = io::Result<Block>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_block().transpose()
    }
}
