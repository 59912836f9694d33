//! The low-storage node: ingest a chain while keeping only coded fragments, serve those
//! fragments to peers, rebuild blocks from peers' fragments, and shrink storage later.

pub mod protocol;
mod store;

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

pub use store::{FragmentStore, HeightRecord};

use crate::chain::{validate_next, Block, ChainFault};
use crate::codec::{
    encode_rows, fragment_block, recover_plain, reassemble, verify_decoded, CodecError, CodecParams,
    CodedFragment, DecodingSet, FragmentKind,
};
use crate::coeffgen::CoefficientSeed;
use crate::gf256::RowEchelon;
use crate::Digest;
use protocol::{ErrorCode, Request, Response};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("bootstrap rejected block {height}: {fault}")]
    BootstrapRejected { height: u64, fault: ChainFault },
    #[error("block source failed: {0}")]
    Source(String),
    #[error("no fragments stored for block {0}")]
    UnknownBlock(u64),
    #[error("a node must keep at least one fragment per block")]
    MinimumOneFragment,
    #[error("cannot grow block {height} from {current} to {requested} fragments by pruning")]
    CannotGrow { height: u64, current: usize, requested: usize },
    #[error("invalid node configuration: {0}")]
    InvalidConfig(String),
    #[error("block unrecoverable: only rank {rank} reachable")]
    Unrecoverable { rank: usize },
    #[error("tampering detected; suspects {:?}", .0.suspects)]
    TamperDetected(TamperReport),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
}

/// Outcome of suspect analysis after a decode failed its hash check.
#[derive(Clone, PartialEq, Eq)]
pub struct TamperReport {
    /// Nodes that served fragments inconsistent with the verified block, or, when no
    /// verified decode could be found, every node that contributed to the failed decode.
    pub suspects: Vec<u64>,
    /// Nodes whose fragments formed the decode that failed its hash check.
    pub contributors: Vec<u64>,
    /// The block, when a clean subset of fragments reproduced the expected hash.
    pub repaired: Option<Vec<u8>>,
}

impl fmt::Debug for TamperReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TamperReport")
            .field("suspects", &self.suspects)
            .field("contributors", &self.contributors)
            .field("repaired", &self.repaired.as_ref().map(Vec::len))
            .finish()
    }
}

/// How many fragments a node keeps for a block, as a function of the block's age.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RPolicy {
    Constant(usize),
    /// `(min_age, r)` steps sorted by age; a block of age `a` uses the last step with
    /// `min_age <= a`. The first step must start at age 0.
    ByAge(Vec<(u64, usize)>),
}

impl RPolicy {
    pub fn r_for(&self, height: u64, tip: u64) -> usize {
        match self {
            RPolicy::Constant(r) => *r,
            RPolicy::ByAge(steps) => {
                let age = tip.saturating_sub(height);
                steps.iter().take_while(|(min_age, _)| *min_age <= age).last().map_or(1, |s| s.1)
            }
        }
    }

    fn validate(&self) -> Result<(), NodeError> {
        match self {
            RPolicy::Constant(0) => Err(NodeError::MinimumOneFragment),
            RPolicy::Constant(r) if *r > u16::MAX as usize + 1 => {
                Err(NodeError::InvalidConfig(format!("r = {r} exceeds the row index range")))
            }
            RPolicy::Constant(_) => Ok(()),
            RPolicy::ByAge(steps) => {
                if steps.first().map(|s| s.0) != Some(0) {
                    return Err(NodeError::InvalidConfig("first age step must start at 0".into()));
                }
                if steps.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(NodeError::InvalidConfig("age steps must be increasing".into()));
                }
                for (_, r) in steps {
                    RPolicy::Constant(*r).validate()?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub node_id: u64,
    pub params: CodecParams,
    pub r_policy: RPolicy,
    /// Extra fragments fetched when the first `k` do not reach full rank.
    pub retry_budget: usize,
}

impl NodeConfig {
    pub fn new(node_id: u64, params: CodecParams, r_policy: RPolicy) -> Self {
        NodeConfig { node_id, params, r_policy, retry_budget: 2 }
    }

    pub fn with_retry_budget(mut self, s_max: usize) -> Self {
        self.retry_budget = s_max;
        self
    }

    /// Storage reduction `k / r` for a block kept with `r` fragments.
    pub fn compression_factor(&self, r: usize) -> f64 {
        self.params.k() as f64 / r as f64
    }
}

/// Counters from one bootstrap run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BootstrapReport {
    pub blocks: usize,
    pub fragments_written: usize,
    /// Most blocks whose plaintext was held at once.
    pub peak_plaintext_blocks: usize,
    pub peak_plaintext_bytes: usize,
}

/// Ingests blocks in height order: validate against the predecessor, encode this node's
/// fragments, keep header and fragments, drop the plaintext, then pull the next block.
///
/// On a validation failure the store keeps every block before the bad one.
pub fn bootstrap<I, B, E>(
    config: &NodeConfig,
    store: &mut FragmentStore,
    source: I,
) -> Result<BootstrapReport, NodeError>
where
    I: IntoIterator<Item = Result<B, E>>,
    B: AsRef<Block>,
    E: fmt::Display,
{
    config.r_policy.validate()?;
    if *store.params() != config.params || store.node_id() != config.node_id {
        return Err(NodeError::InvalidConfig("store belongs to a different node or network".into()));
    }
    let mut report = BootstrapReport::default();
    let mut prev = store.tip().map(|r| r.header);
    let mut held = 0usize;
    for item in source {
        let block = item.map_err(|e| NodeError::Source(e.to_string()))?;
        held += 1;
        report.peak_plaintext_blocks = report.peak_plaintext_blocks.max(held);
        let b = block.as_ref();
        report.peak_plaintext_bytes = report.peak_plaintext_bytes.max(b.payload.len());

        validate_next(prev.as_ref(), b)
            .map_err(|fault| NodeError::BootstrapRejected { height: fault.height(), fault })?;
        let height = b.height();
        let r = config.r_policy.r_for(height, height);
        let plain = fragment_block(&config.params, &b.payload)?;
        let fragments = encode_rows(&config.params, CoefficientSeed::new(config.node_id, height), &plain, 0..r)?;
        drop(plain);
        report.fragments_written += fragments.len();
        let header = b.header;
        store.insert(HeightRecord { header, header_hash: header.hash(), fragments })?;
        prev = Some(header);
        report.blocks += 1;

        drop(block);
        held -= 1;
    }
    apply_policy(config, store)?;
    Ok(report)
}

/// [`bootstrap`] for sources that cannot fail.
pub fn bootstrap_blocks<I, B>(
    config: &NodeConfig,
    store: &mut FragmentStore,
    source: I,
) -> Result<BootstrapReport, NodeError>
where
    I: IntoIterator<Item = B>,
    B: AsRef<Block>,
{
    bootstrap(config, store, source.into_iter().map(Ok::<B, std::convert::Infallible>))
}

/// Up to `want` stored fragments for `height`, lowest rows first.
pub fn serve_fragments(store: &FragmentStore, height: u64, want: usize) -> Result<Vec<CodedFragment>, NodeError> {
    match store.get(height) {
        Some(rec) if !rec.fragments.is_empty() => Ok(rec.fragments.iter().take(want).cloned().collect()),
        _ => Err(NodeError::UnknownBlock(height)),
    }
}

/// Drops fragments of `height` down to the `new_r` lowest rows, without re-encoding.
pub fn prune(store: &mut FragmentStore, height: u64, new_r: usize) -> Result<(), NodeError> {
    if new_r == 0 {
        return Err(NodeError::MinimumOneFragment);
    }
    let current = store.get(height).ok_or(NodeError::UnknownBlock(height))?.r();
    if new_r > current {
        return Err(NodeError::CannotGrow { height, current, requested: new_r });
    }
    store.truncate(height, new_r)?;
    Ok(())
}

/// Prunes every height down to what the policy allows at the current tip.
pub fn apply_policy(config: &NodeConfig, store: &mut FragmentStore) -> Result<usize, NodeError> {
    let Some(tip) = store.tip().map(|r| r.header.height) else {
        return Ok(0);
    };
    let mut pruned = 0;
    let heights: Vec<u64> = store.heights().collect();
    for h in heights {
        let target = config.r_policy.r_for(h, tip);
        let current = store.get(h).map_or(0, HeightRecord::r);
        if target < current {
            prune(store, h, target)?;
            pruned += current - target;
        }
    }
    Ok(pruned)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PeerError {
    #[error("peer unreachable")]
    Unreachable,
    #[error("peer has no fragments for this block")]
    UnknownBlock,
    #[error("peer sent a malformed reply: {0}")]
    Malformed(String),
}

/// The set of peers a recovering node can ask for fragments.
pub trait Peers {
    /// Candidate peers, in a stable order.
    fn peer_ids(&self) -> Vec<u64>;

    /// `GET_FRAGMENTS(height, max)` sent to `peer`.
    fn get_fragments(&mut self, peer: u64, height: u64, max: u16) -> Result<Vec<CodedFragment>, PeerError>;
}

/// Peers backed by local stores, spoken to through encoded protocol frames.
pub struct StorePeers<S> {
    stores: Vec<S>,
    pub bytes_received: usize,
}

impl<S: Borrow<FragmentStore>> StorePeers<S> {
    pub fn new(stores: Vec<S>) -> Self {
        StorePeers { stores, bytes_received: 0 }
    }
}

impl<S: Borrow<FragmentStore>> Peers for StorePeers<S> {
    fn peer_ids(&self) -> Vec<u64> {
        self.stores.iter().map(|s| s.borrow().node_id()).collect()
    }

    fn get_fragments(&mut self, peer: u64, height: u64, max: u16) -> Result<Vec<CodedFragment>, PeerError> {
        let store = self
            .stores
            .iter()
            .map(Borrow::borrow)
            .find(|s| s.node_id() == peer)
            .ok_or(PeerError::Unreachable)?;
        let reply = protocol::handle_frame(store, &Request::GetFragments { height, max }.encode());
        self.bytes_received += reply.len();
        match Response::decode(&reply, store.params()).map_err(|e| PeerError::Malformed(e.0))? {
            Response::Fragments { fragments, .. } => Ok(fragments),
            Response::Error(ErrorCode::UnknownBlock) => Err(PeerError::UnknownBlock),
            Response::Error(_) => Err(PeerError::Unreachable),
            Response::Header(_) => Err(PeerError::Malformed("unexpected HEADER".into())),
        }
    }
}

/// A successful block recovery.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub payload: Vec<u8>,
    /// Distinct peers that were asked for fragments.
    pub peers_contacted: usize,
    /// Fragments received over the wire, counting re-sent ones.
    pub fragments_received: usize,
    /// Extra fragments fetched because the first `k` were rank deficient.
    pub extra_fetched: usize,
    /// Nodes whose fragments went into the decode.
    pub contributors: Vec<u64>,
}

#[derive(Default, Clone, Copy)]
struct PeerState {
    received: usize,
    exhausted: bool,
}

/// Round-robin fragment collection over a shuffled peer order.
struct Gatherer<'a, N: Peers + ?Sized> {
    net: &'a mut N,
    params: CodecParams,
    height: u64,
    order: Vec<u64>,
    cursor: usize,
    state: HashMap<u64, PeerState>,
    pool: Vec<CodedFragment>,
    keys: HashSet<(u64, FragmentKind)>,
    contacted: BTreeSet<u64>,
    received: usize,
}

impl<'a, N: Peers + ?Sized> Gatherer<'a, N> {
    fn new(net: &'a mut N, params: CodecParams, height: u64, rng: &mut impl Rng) -> Self {
        let mut order = net.peer_ids();
        order.sort_unstable();
        order.dedup();
        order.shuffle(rng);
        Gatherer {
            net,
            params,
            height,
            order,
            cursor: 0,
            state: HashMap::new(),
            pool: Vec::new(),
            keys: HashSet::new(),
            contacted: BTreeSet::new(),
            received: 0,
        }
    }

    /// Fetches up to `n` new fragments, skipping peers in `exclude`.
    /// Returns the pool indices of what arrived.
    fn fetch(&mut self, n: usize, exclude: &HashSet<u64>) -> Vec<usize> {
        let mut got = Vec::new();
        let mut idle = 0;
        while got.len() < n && idle < self.order.len() {
            let peer = self.order[self.cursor];
            self.cursor = (self.cursor + 1) % self.order.len();
            let st = self.state.entry(peer).or_default();
            if st.exhausted || exclude.contains(&peer) {
                idle += 1;
                continue;
            }
            let need = n - got.len();
            let ask = st.received.saturating_add(need).min(u16::MAX as usize);
            self.contacted.insert(peer);
            let reply = self.net.get_fragments(peer, self.height, ask as u16);
            let st = self.state.get_mut(&peer).expect("inserted above");
            let fragments = match reply {
                Ok(f) => f,
                Err(_) => {
                    st.exhausted = true;
                    idle += 1;
                    continue;
                }
            };
            self.received += fragments.len();
            if fragments.len() < ask || ask == u16::MAX as usize {
                st.exhausted = true;
            }
            let mut fresh = 0;
            for f in fragments {
                // a peer may only vouch for its own fragments of the requested block
                if f.node_id != peer
                    || f.block_height != self.height
                    || f.data.len() != self.params.fragment_size()
                    || matches!(f.kind, FragmentKind::Plain { index } if index as usize >= self.params.k())
                {
                    continue;
                }
                if self.keys.insert((f.node_id, f.kind)) {
                    got.push(self.pool.len());
                    self.pool.push(f);
                    fresh += 1;
                }
            }
            st.received += fresh;
            if fresh == 0 {
                idle += 1;
            } else {
                idle = 0;
            }
        }
        got
    }
}

fn set_of<'f>(height: u64, fragments: impl IntoIterator<Item = &'f CodedFragment>) -> DecodingSet {
    DecodingSet::new(height, fragments.into_iter().cloned())
        .expect("gatherer keeps fragments unique and consistent")
}

/// Decodes `set` and checks the hash; `None` on any failure.
fn try_decode(params: &CodecParams, set: &DecodingSet, expected: &Digest) -> Option<Vec<u8>> {
    let plain = recover_plain(params, set).ok()?;
    let payload = reassemble(params, &plain).ok()?;
    verify_decoded(&payload, expected).then_some(payload)
}

fn rank_of<'f>(params: &CodecParams, fragments: impl IntoIterator<Item = &'f CodedFragment>) -> usize {
    let mut e = RowEchelon::new(params.k());
    for f in fragments {
        e.insert(&f.coefficients(params.k()));
        if e.is_full() {
            break;
        }
    }
    e.rank()
}

/// Rebuilds block `height` from peers' fragments and checks it against `expected_hash`.
///
/// Gathers `k` fragments, then up to `retry_budget` more while the system is rank
/// deficient. If the decoded block fails its hash check, each contributing peer is
/// left out in turn (topping up from other peers) until a decode verifies; the
/// fragments that disagree with that verified block name the suspects.
pub fn recover_block<N: Peers + ?Sized>(
    config: &NodeConfig,
    height: u64,
    peers: &mut N,
    expected_hash: &Digest,
    rng: &mut impl Rng,
) -> Result<Recovery, NodeError> {
    let params = config.params;
    let k = params.k();
    let mut g = Gatherer::new(peers, params, height, rng);
    let none = HashSet::new();

    g.fetch(k, &none);
    let mut rank = rank_of(&params, &g.pool);
    let mut extra = 0;
    while rank < k && extra < config.retry_budget {
        if g.fetch(1, &none).is_empty() {
            break;
        }
        extra += 1;
        rank = rank_of(&params, &g.pool);
    }
    if rank < k {
        return Err(NodeError::Unrecoverable { rank });
    }

    let mut contributors: Vec<u64> = g.pool.iter().map(|f| f.node_id).collect();
    contributors.sort_unstable();
    contributors.dedup();
    let set = set_of(height, &g.pool);
    if let Some(payload) = try_decode(&params, &set, expected_hash) {
        return Ok(Recovery {
            payload,
            peers_contacted: g.contacted.len(),
            fragments_received: g.received,
            extra_fetched: extra,
            contributors,
        });
    }
    Err(NodeError::TamperDetected(suspect_analysis(config, &mut g, expected_hash, rng)))
}

const RESAMPLE_ATTEMPTS: usize = 32;

fn suspect_analysis<N: Peers + ?Sized>(
    config: &NodeConfig,
    g: &mut Gatherer<'_, N>,
    expected: &Digest,
    rng: &mut impl Rng,
) -> TamperReport {
    let params = config.params;
    let k = params.k();
    let height = g.height;
    let mut contributors: Vec<u64> = g.pool.iter().map(|f| f.node_id).collect();
    contributors.sort_unstable();
    contributors.dedup();

    let mut truth = None;
    // leave one peer out, topping up from the others
    for &left_out in &contributors {
        let exclude = HashSet::from([left_out]);
        let mut rank = rank_of(&params, g.pool.iter().filter(|f| f.node_id != left_out));
        while rank < k {
            if g.fetch(k - rank, &exclude).is_empty() {
                break;
            }
            rank = rank_of(&params, g.pool.iter().filter(|f| f.node_id != left_out));
        }
        if rank < k {
            continue;
        }
        let set = set_of(height, g.pool.iter().filter(|f| f.node_id != left_out));
        if let Some(p) = try_decode(&params, &set, expected) {
            truth = Some(p);
            break;
        }
    }

    // several bad peers in one set: try random peer subsets
    if truth.is_none() {
        let mut all = HashSet::new();
        while !g.fetch(usize::MAX, &all).is_empty() {}
        all.clear();
        let mut holders: Vec<u64> = g.pool.iter().map(|f| f.node_id).collect();
        holders.sort_unstable();
        holders.dedup();
        for _ in 0..RESAMPLE_ATTEMPTS {
            holders.shuffle(rng);
            let mut echelon = RowEchelon::new(k);
            let mut chosen = HashSet::new();
            for &h in &holders {
                chosen.insert(h);
                for f in g.pool.iter().filter(|f| f.node_id == h) {
                    echelon.insert(&f.coefficients(k));
                }
                if echelon.is_full() {
                    break;
                }
            }
            if !echelon.is_full() {
                break;
            }
            let set = set_of(height, g.pool.iter().filter(|f| chosen.contains(&f.node_id)));
            if let Some(p) = try_decode(&params, &set, expected) {
                truth = Some(p);
                break;
            }
        }
    }

    match truth {
        Some(payload) => {
            let suspects = inconsistent_nodes(&params, height, &payload, &g.pool);
            TamperReport { suspects, contributors, repaired: Some(payload) }
        }
        None => TamperReport { suspects: contributors.clone(), contributors, repaired: None },
    }
}

/// Nodes whose fragments differ from what the verified payload encodes to.
fn inconsistent_nodes(params: &CodecParams, height: u64, payload: &[u8], pool: &[CodedFragment]) -> Vec<u64> {
    let plain = fragment_block(params, payload).expect("payload came out of a decode");
    let mut bad = BTreeSet::new();
    for f in pool {
        let expected = match f.kind {
            FragmentKind::Plain { index } => plain[index as usize].clone(),
            FragmentKind::Coded { row } => {
                let seed = CoefficientSeed::new(f.node_id, height);
                let row = row as usize;
                encode_rows(params, seed, &plain, row..row + 1).expect("valid row").remove(0).data
            }
        };
        if expected != f.data {
            bad.insert(f.node_id);
        }
    }
    bad.into_iter().collect()
}
