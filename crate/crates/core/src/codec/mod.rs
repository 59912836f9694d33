//! Block fragmentation, encoding into seed-derived linear combinations, and decoding.
//!
//! A block payload is laid out as `len_be8 || payload || zeros` up to `block_size`
//! bytes and cut into `k` equal fragments. Coded fragment `u` of node `i` for block
//! `j` is the combination of those fragments with coefficient row `u` of seed `(i, j)`.
//! Plain fragments act as unit rows, so both kinds mix freely in a decoding set.

mod lsbf;

use std::collections::HashSet;

use thiserror::Error;

pub use lsbf::{LSBF_HEADER_LEN, LSBF_MAGIC, LSBF_VERSION};

use crate::coeffgen::{coefficient_matrix, coefficient_row, CoefficientSeed};
use crate::gf256::{FieldError, FieldMatrix, RowEchelon};
use crate::{sha256, Digest};

/// Bytes reserved at the front of the padded block for the payload length.
pub const LENGTH_PREFIX: usize = 8;

/// Largest supported fragment count per block.
pub const MAX_K: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid codec parameters: {0}")]
    InvalidParams(String),
    #[error("block of {len} bytes exceeds the {max}-byte payload limit")]
    BlockTooLarge { len: usize, max: usize },
    #[error("duplicate fragment from node {node_id} ({kind:?})")]
    DuplicateFragment { node_id: u64, kind: FragmentKind },
    #[error("inconsistent decoding set: {0}")]
    Inconsistent(String),
    #[error("insufficient rank: {rank} of {k}")]
    InsufficientRank { rank: usize, k: usize },
    #[error("corrupt decode: {0}")]
    CorruptDecode(String),
    #[error("malformed fragment record: {0}")]
    Format(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Network-wide coding constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodecParams {
    k: usize,
    block_size: usize,
}

impl CodecParams {
    pub fn new(k: usize, block_size: usize) -> Result<Self, CodecError> {
        if !(1..=MAX_K).contains(&k) {
            return Err(CodecError::InvalidParams(format!("k = {k} outside 1..={MAX_K}")));
        }
        if !block_size.is_multiple_of(k) {
            return Err(CodecError::InvalidParams(format!(
                "block size {block_size} is not a multiple of k = {k}"
            )));
        }
        if block_size / k <= LENGTH_PREFIX {
            return Err(CodecError::InvalidParams(format!(
                "fragment size {} must exceed {LENGTH_PREFIX} bytes",
                block_size / k
            )));
        }
        if u32::try_from(block_size).is_err() {
            return Err(CodecError::InvalidParams(format!("block size {block_size} too large")));
        }
        Ok(CodecParams { k, block_size })
    }

    /// Smallest valid parameters for `k` whose block size is at least `min_block_size`.
    pub fn rounded_up(k: usize, min_block_size: usize) -> Result<Self, CodecError> {
        let frag = min_block_size.div_ceil(k.max(1)).max(LENGTH_PREFIX + 1);
        Self::new(k, frag * k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn fragment_size(&self) -> usize {
        self.block_size / self.k
    }

    pub fn max_payload(&self) -> usize {
        self.block_size - LENGTH_PREFIX
    }

    /// Size of one LSBF record for these parameters.
    pub fn record_len(&self) -> usize {
        LSBF_HEADER_LEN + self.fragment_size()
    }
}

/// Whether a fragment is a coded combination or one of the original slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FragmentKind {
    Coded { row: u16 },
    Plain { index: u16 },
}

#[derive(Clone, PartialEq, Eq)]
pub struct CodedFragment {
    pub node_id: u64,
    pub block_height: u64,
    pub kind: FragmentKind,
    pub data: Vec<u8>,
}

impl std::fmt::Debug for CodedFragment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodedFragment")
            .field("node_id", &self.node_id)
            .field("block_height", &self.block_height)
            .field("kind", &self.kind)
            .field("len", &self.data.len())
            .finish()
    }
}

impl CodedFragment {
    pub fn seed(&self) -> CoefficientSeed {
        CoefficientSeed::new(self.node_id, self.block_height)
    }

    pub fn is_plain(&self) -> bool {
        matches!(self.kind, FragmentKind::Plain { .. })
    }

    /// Row index for coded fragments, `None` for plain ones.
    pub fn row_index(&self) -> Option<usize> {
        match self.kind {
            FragmentKind::Coded { row } => Some(row as usize),
            FragmentKind::Plain { .. } => None,
        }
    }

    /// The coefficient row this fragment carries: regenerated from the seed, or a unit row.
    pub fn coefficients(&self, k: usize) -> Vec<u8> {
        match self.kind {
            FragmentKind::Coded { row } => coefficient_row(self.seed(), k, row as usize),
            FragmentKind::Plain { index } => {
                let mut unit = vec![0u8; k];
                unit[index as usize] = 1;
                unit
            }
        }
    }

    fn key(&self) -> (u64, FragmentKind) {
        (self.node_id, self.kind)
    }
}

/// Splits a payload into `k` fragments of `block_size / k` bytes.
pub fn fragment_block(params: &CodecParams, payload: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
    if payload.len() > params.max_payload() {
        return Err(CodecError::BlockTooLarge { len: payload.len(), max: params.max_payload() });
    }
    let mut padded = vec![0u8; params.block_size];
    padded[..LENGTH_PREFIX].copy_from_slice(&(payload.len() as u64).to_be_bytes());
    padded[LENGTH_PREFIX..LENGTH_PREFIX + payload.len()].copy_from_slice(payload);
    Ok(padded.chunks(params.fragment_size()).map(<[u8]>::to_vec).collect())
}

/// Inverse of [`fragment_block`]: strips the length prefix and padding.
pub fn reassemble<F: AsRef<[u8]>>(params: &CodecParams, fragments: &[F]) -> Result<Vec<u8>, CodecError> {
    if fragments.len() != params.k || fragments.iter().any(|f| f.as_ref().len() != params.fragment_size()) {
        return Err(CodecError::Inconsistent("fragment shape does not match parameters".into()));
    }
    let mut padded = Vec::with_capacity(params.block_size);
    for f in fragments {
        padded.extend_from_slice(f.as_ref());
    }
    let len = u64::from_be_bytes(padded[..LENGTH_PREFIX].try_into().unwrap());
    if len > params.max_payload() as u64 {
        return Err(CodecError::CorruptDecode(format!(
            "length prefix {len} exceeds {}",
            params.max_payload()
        )));
    }
    // a clean decode leaves the padding zero; anything else means a bad fragment was used
    if padded[LENGTH_PREFIX + len as usize..].iter().any(|&b| b != 0) {
        return Err(CodecError::CorruptDecode("nonzero padding".into()));
    }
    padded.truncate(LENGTH_PREFIX + len as usize);
    padded.drain(..LENGTH_PREFIX);
    Ok(padded)
}

/// Produces coded rows `rows` of `seed` from already-split plain fragments.
pub fn encode_rows<F: AsRef<[u8]>>(
    params: &CodecParams,
    seed: CoefficientSeed,
    plain: &[F],
    rows: std::ops::Range<usize>,
) -> Result<Vec<CodedFragment>, CodecError> {
    if rows.end > u16::MAX as usize + 1 {
        return Err(CodecError::InvalidParams(format!("row index {} exceeds u16", rows.end - 1)));
    }
    let indices: Vec<usize> = rows.collect();
    let matrix = coefficient_matrix(seed, params.k, &indices);
    let data = matrix.mul_vectors(plain)?;
    Ok(indices
        .into_iter()
        .zip(data)
        .map(|(u, data)| CodedFragment {
            node_id: seed.node_id,
            block_height: seed.block_height,
            kind: FragmentKind::Coded { row: u as u16 },
            data,
        })
        .collect())
}

/// Encodes a payload into coded fragments `0..r` for `seed`.
pub fn encode_fragments(
    params: &CodecParams,
    seed: CoefficientSeed,
    payload: &[u8],
    r: usize,
) -> Result<Vec<CodedFragment>, CodecError> {
    if r == 0 {
        return Err(CodecError::InvalidParams("r must be at least 1".into()));
    }
    let plain = fragment_block(params, payload)?;
    encode_rows(params, seed, &plain, 0..r)
}

/// The `k` original fragments of a payload, tagged as plain fragments from `node_id`.
pub fn plain_fragments(
    params: &CodecParams,
    node_id: u64,
    block_height: u64,
    payload: &[u8],
) -> Result<Vec<CodedFragment>, CodecError> {
    Ok(fragment_block(params, payload)?
        .into_iter()
        .enumerate()
        .map(|(i, data)| CodedFragment {
            node_id,
            block_height,
            kind: FragmentKind::Plain { index: i as u16 },
            data,
        })
        .collect())
}

/// Fragments of one block gathered for decoding.
#[derive(Debug, Clone)]
pub struct DecodingSet {
    block_height: u64,
    fragments: Vec<CodedFragment>,
    keys: HashSet<(u64, FragmentKind)>,
}

impl DecodingSet {
    pub fn empty(block_height: u64) -> Self {
        DecodingSet { block_height, fragments: Vec::new(), keys: HashSet::new() }
    }

    pub fn new(
        block_height: u64,
        fragments: impl IntoIterator<Item = CodedFragment>,
    ) -> Result<Self, CodecError> {
        let mut set = Self::empty(block_height);
        for f in fragments {
            set.push(f)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, fragment: CodedFragment) -> Result<(), CodecError> {
        if fragment.block_height != self.block_height {
            return Err(CodecError::Inconsistent(format!(
                "fragment for height {} in a set for height {}",
                fragment.block_height, self.block_height
            )));
        }
        if let Some(first) = self.fragments.first() {
            if first.data.len() != fragment.data.len() {
                return Err(CodecError::Inconsistent(format!(
                    "fragment length {} differs from {}",
                    fragment.data.len(),
                    first.data.len()
                )));
            }
        }
        if !self.keys.insert(fragment.key()) {
            return Err(CodecError::DuplicateFragment {
                node_id: fragment.node_id,
                kind: fragment.kind,
            });
        }
        self.fragments.push(fragment);
        Ok(())
    }

    pub fn contains(&self, node_id: u64, kind: FragmentKind) -> bool {
        self.keys.contains(&(node_id, kind))
    }

    pub fn block_height(&self) -> u64 {
        self.block_height
    }

    pub fn fragments(&self) -> &[CodedFragment] {
        &self.fragments
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn into_fragments(self) -> Vec<CodedFragment> {
        self.fragments
    }
}

/// Result of a rank check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeCheck {
    pub rank: usize,
    pub decodable: bool,
}

/// Indices (into `fragments`) of the first linearly independent rows, at most `k` of them.
fn independent_rows(params: &CodecParams, fragments: &[CodedFragment]) -> Vec<usize> {
    let mut echelon = RowEchelon::new(params.k);
    let mut picked = Vec::with_capacity(params.k);
    for (i, f) in fragments.iter().enumerate() {
        if plain_index_out_of_range(params, f) {
            continue;
        }
        if echelon.insert(&f.coefficients(params.k)) {
            picked.push(i);
            if echelon.is_full() {
                break;
            }
        }
    }
    picked
}

fn plain_index_out_of_range(params: &CodecParams, f: &CodedFragment) -> bool {
    matches!(f.kind, FragmentKind::Plain { index } if index as usize >= params.k)
}

pub fn can_decode(params: &CodecParams, set: &DecodingSet) -> DecodeCheck {
    let rank = independent_rows(params, &set.fragments).len();
    DecodeCheck { rank, decodable: rank == params.k }
}

/// Solves for the `k` plain fragments of the block.
pub fn recover_plain(params: &CodecParams, set: &DecodingSet) -> Result<Vec<Vec<u8>>, CodecError> {
    if let Some(f) = set.fragments.iter().find(|f| f.data.len() != params.fragment_size()) {
        return Err(CodecError::Inconsistent(format!(
            "fragment length {} but parameters need {}",
            f.data.len(),
            params.fragment_size()
        )));
    }
    let picked = independent_rows(params, &set.fragments);
    if picked.len() < params.k {
        return Err(CodecError::InsufficientRank { rank: picked.len(), k: params.k });
    }
    let rows: Vec<Vec<u8>> = picked.iter().map(|&i| set.fragments[i].coefficients(params.k)).collect();
    let inverse = FieldMatrix::from_rows(&rows)?.invert()?;
    let data: Vec<&[u8]> = picked.iter().map(|&i| set.fragments[i].data.as_slice()).collect();
    Ok(inverse.mul_vectors(&data)?)
}

/// Rebuilds the block payload from a full-rank set.
pub fn decode_block(params: &CodecParams, set: &DecodingSet) -> Result<Vec<u8>, CodecError> {
    let plain = recover_plain(params, set)?;
    reassemble(params, &plain)
}

pub fn verify_decoded(payload: &[u8], expected_hash: &Digest) -> bool {
    sha256(payload) == *expected_hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf256;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(k: usize, sb: usize) -> CodecParams {
        CodecParams::new(k, sb).unwrap()
    }

    fn random_payload(rng: &mut impl Rng, len: usize) -> Vec<u8> {
        (0..len).map(|_| rng.gen()).collect()
    }

    #[test]
    fn params_validation() {
        assert!(CodecParams::new(0, 16).is_err());
        assert!(CodecParams::new(129, 129 * 16).is_err());
        assert!(CodecParams::new(128, 128 * 16).is_ok());
        assert!(CodecParams::new(3, 16).is_err());
        assert!(CodecParams::new(2, 16).is_err()); // 8-byte fragments leave no room
        assert!(CodecParams::new(2, 18).is_ok());
        let p = CodecParams::rounded_up(100, 1024).unwrap();
        assert_eq!((p.block_size(), p.fragment_size()), (1100, 11));
        assert_eq!(CodecParams::rounded_up(2, 4).unwrap().block_size(), 18);
    }

    #[test]
    fn fragment_layout() {
        // k=2 needs fragments of at least 9 bytes, so the smallest layout is s_B = 18
        let p = params(2, 18);
        let frags = fragment_block(&p, &[0xAA]).unwrap();
        assert_eq!(frags.len(), 2);
        assert_eq!(frags[0], vec![0, 0, 0, 0, 0, 0, 0, 1, 0xAA]);
        assert_eq!(frags[1], vec![0; 9]);
    }

    #[test]
    fn fragment_reassembly_oracle() {
        let p = params(4, 36);
        let payload: Vec<u8> = (0..24).collect();
        let frags = fragment_block(&p, &payload).unwrap();
        assert!(frags.iter().all(|f| f.len() == 9));
        let flat: Vec<u8> = frags.concat();
        assert_eq!(&flat[..8], &24u64.to_be_bytes());
        assert_eq!(&flat[8..32], payload.as_slice());
        assert!(flat[32..].iter().all(|&b| b == 0));
        assert_eq!(reassemble(&p, &frags).unwrap(), payload);
    }

    #[test]
    fn oversize_payload_rejected() {
        let p = params(4, 64);
        assert_eq!(
            fragment_block(&p, &[0; 64 - 7]),
            Err(CodecError::BlockTooLarge { len: 57, max: 56 })
        );
        assert!(fragment_block(&p, &[0; 56]).is_ok());
        assert!(matches!(
            encode_fragments(&p, CoefficientSeed::new(1, 1), &[0; 60], 2),
            Err(CodecError::BlockTooLarge { .. })
        ));
    }

    #[test]
    fn zero_r_rejected() {
        let p = params(2, 32);
        assert!(matches!(
            encode_fragments(&p, CoefficientSeed::new(1, 1), b"x", 0),
            Err(CodecError::InvalidParams(_))
        ));
    }

    #[test]
    fn k1_fragments_are_scalar_multiples() {
        let p = params(1, 24);
        let seed = CoefficientSeed::new(5, 5);
        let payload = b"hello world";
        let plain = fragment_block(&p, payload).unwrap().remove(0);
        let coded = encode_fragments(&p, seed, payload, 3).unwrap();
        let stream = crate::coeffgen::coefficient_stream(seed, 3);
        for (u, f) in coded.iter().enumerate() {
            let expect: Vec<u8> = plain.iter().map(|&b| gf256::mul(stream[u], b)).collect();
            assert_eq!(f.data, expect);
        }
    }

    #[test]
    fn encode_matches_independent_composition() {
        let p = params(2, 20);
        let seed = CoefficientSeed::new(7, 3);
        let payload = b"0123456789";
        let coded = encode_fragments(&p, seed, payload, 2).unwrap();
        let plain = fragment_block(&p, payload).unwrap();
        let stream = crate::coeffgen::coefficient_stream(seed, 4);
        for (u, f) in coded.iter().enumerate() {
            assert_eq!(f.kind, FragmentKind::Coded { row: u as u16 });
            for v in 0..p.fragment_size() {
                let expect = gf256::mul(stream[2 * u], plain[0][v])
                    ^ gf256::mul(stream[2 * u + 1], plain[1][v]);
                assert_eq!(f.data[v], expect);
            }
        }
    }

    #[test]
    fn zero_coefficient_row_gives_zero_fragment() {
        // A row of zeros is astronomically unlikely from the stream, so build one directly.
        let p = params(3, 30);
        let plain = fragment_block(&p, b"abc").unwrap();
        let zero = FieldMatrix::zeros(1, 3);
        assert_eq!(zero.mul_vectors(&plain).unwrap(), vec![vec![0; 10]]);
    }

    #[test]
    fn decodes_from_plain_fragments() {
        let p = params(4, 40);
        let payload = b"plain fragments only";
        let set = DecodingSet::new(0, plain_fragments(&p, 0, 0, payload).unwrap()).unwrap();
        assert_eq!(can_decode(&p, &set), DecodeCheck { rank: 4, decodable: true });
        assert_eq!(decode_block(&p, &set).unwrap(), payload);
    }

    #[test]
    fn underdetermined_set() {
        let p = params(4, 40);
        let coded = encode_fragments(&p, CoefficientSeed::new(1, 0), b"abc", 3).unwrap();
        let set = DecodingSet::new(0, coded).unwrap();
        let check = can_decode(&p, &set);
        assert!(!check.decodable);
        assert!(check.rank <= 3);
        assert_eq!(decode_block(&p, &set), Err(CodecError::InsufficientRank { rank: 3, k: 4 }));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let p = params(4, 40);
        let coded = encode_fragments(&p, CoefficientSeed::new(1, 0), b"abc", 2).unwrap();
        let dup = vec![coded[0].clone(), coded[1].clone(), coded[0].clone()];
        assert_eq!(
            DecodingSet::new(0, dup).unwrap_err(),
            CodecError::DuplicateFragment { node_id: 1, kind: FragmentKind::Coded { row: 0 } }
        );
    }

    #[test]
    fn mixed_heights_and_lengths_rejected() {
        let p = params(2, 20);
        let a = encode_fragments(&p, CoefficientSeed::new(1, 0), b"a", 1).unwrap();
        let b = encode_fragments(&p, CoefficientSeed::new(1, 1), b"a", 1).unwrap();
        assert!(matches!(
            DecodingSet::new(0, a.iter().cloned().chain(b)),
            Err(CodecError::Inconsistent(_))
        ));
        let mut short = a[0].clone();
        short.node_id = 2;
        short.data.pop();
        assert!(matches!(DecodingSet::new(0, [a[0].clone(), short]), Err(CodecError::Inconsistent(_))));
    }

    #[test]
    fn single_node_round_trip() {
        let p = params(8, 8 * 32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let payload = random_payload(&mut rng, 200);
        let coded = encode_fragments(&p, CoefficientSeed::new(9, 0), &payload, 8).unwrap();
        let set = DecodingSet::new(0, coded).unwrap();
        assert_eq!(decode_block(&p, &set).unwrap(), payload);
    }

    #[test]
    fn mixed_plain_and_coded_from_three_nodes() {
        let k = 10;
        let p = params(k, k * 16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let payload = random_payload(&mut rng, 150);
        let plain = plain_fragments(&p, 0, 4, &payload).unwrap();
        let mut frags = vec![plain[3].clone(), plain[7].clone()];
        frags.extend(encode_fragments(&p, CoefficientSeed::new(11, 4), &payload, 3).unwrap());
        frags.extend(encode_fragments(&p, CoefficientSeed::new(12, 4), &payload, 3).unwrap());
        frags.extend(encode_fragments(&p, CoefficientSeed::new(13, 4), &payload, 2).unwrap());
        assert_eq!(frags.len(), k);
        let set = DecodingSet::new(4, frags).unwrap();
        assert_eq!(decode_block(&p, &set).unwrap(), payload);
    }

    #[test]
    fn corrupt_length_prefix_detected() {
        let p = params(2, 20);
        let mut frags = plain_fragments(&p, 0, 0, b"abc").unwrap();
        frags[0].data[0] = 0xFF;
        let set = DecodingSet::new(0, frags).unwrap();
        assert!(matches!(decode_block(&p, &set), Err(CodecError::CorruptDecode(_))));
    }

    #[test]
    fn verify_decoded_examples() {
        let payload = b"some block".to_vec();
        let h = sha256(&payload);
        assert!(verify_decoded(&payload, &h));
        let mut flipped = payload.clone();
        flipped[3] ^= 0x10;
        assert!(!verify_decoded(&flipped, &h));
    }

    #[test]
    fn tampered_fragment_fails_verification() {
        let p = params(4, 64);
        let payload = b"tamper me please".to_vec();
        let mut coded = encode_fragments(&p, CoefficientSeed::new(3, 2), &payload, 4).unwrap();
        coded[2].data[12] ^= 1;
        let set = DecodingSet::new(2, coded).unwrap();
        match decode_block(&p, &set) {
            Ok(out) => assert!(!verify_decoded(&out, &sha256(&payload))),
            Err(CodecError::CorruptDecode(_)) => {}
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn any_full_rank_subset_decodes_identically() {
        let k = 6;
        let p = params(k, k * 12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let payload = random_payload(&mut rng, 50);
        let mut all = Vec::new();
        for node in 0..4 {
            all.extend(encode_fragments(&p, CoefficientSeed::new(node, 1), &payload, 3).unwrap());
        }
        for _ in 0..20 {
            let start = rng.gen_range(0..all.len() - k);
            let take = rng.gen_range(k..=all.len() - start);
            let set = DecodingSet::new(1, all[start..start + take].iter().cloned()).unwrap();
            if can_decode(&p, &set).decodable {
                assert_eq!(decode_block(&p, &set).unwrap(), payload);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn encoding_is_linear(a in proptest::collection::vec(proptest::prelude::any::<u8>(), 0..60),
                              node: u64, height: u64) {
            let p = params(4, 72);
            let b: Vec<u8> = a.iter().map(|x| x.wrapping_mul(31).wrapping_add(7)).collect();
            // the length prefix is shared, so it cancels in the XOR of the padded blocks
            let xor: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let seed = CoefficientSeed::new(node, height);
            let ea = encode_fragments(&p, seed, &a, 3).unwrap();
            let eb = encode_fragments(&p, seed, &b, 3).unwrap();
            let ex = encode_fragments(&p, seed, &xor, 3).unwrap();
            let len_only = encode_fragments(&p, seed, &vec![0; a.len()], 3).unwrap();
            for u in 0..3 {
                let combined: Vec<u8> = ea[u].data.iter().zip(&eb[u].data).zip(&len_only[u].data)
                    .map(|((x, y), z)| x ^ y ^ z).collect();
                proptest::prop_assert_eq!(&combined, &ex[u].data);
            }
        }

        #[test]
        fn round_trip(payload in proptest::collection::vec(proptest::prelude::any::<u8>(), 0..200),
                      k in 1usize..12, node: u64) {
            let p = CodecParams::rounded_up(k, 208).unwrap();
            let coded = encode_fragments(&p, CoefficientSeed::new(node, 0), &payload, k + 2).unwrap();
            let set = DecodingSet::new(0, coded).unwrap();
            proptest::prop_assert_eq!(decode_block(&p, &set).unwrap(), payload);
        }
    }
}
