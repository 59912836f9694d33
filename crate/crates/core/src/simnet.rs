//! Deterministic in-process network of low-storage nodes: availability trials, end-to-end
//! recovery with churn, and byzantine fragment servers.
//!
//! Configuration is TOML:
//! ```toml
//! master_seed = 7
//! n_nodes = 100
//! k = 100
//! block_size = 1600          # s_B, a multiple of k
//! r = "constant:5"           # or "geometric:0.2", "replicated:20"
//! chain_length = 10
//! churn = 0.0                # per-round probability that a node is down
//! retry_budget = 2
//! trials = 10000
//! byzantine = [3, 17]
//! byzantine_mode = "bitflip" # or "tampered-payload", "honest-reencode"
//! scenario = "recovery"      # or "availability", "tamper"
//! ```

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Geometric};
use serde::Deserialize;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::analysis::{irrecoverability_coded, irrecoverability_replicated, Distribution};
use crate::chain::build_chain;
use crate::codec::{
    decode_block, encode_rows, fragment_block, CodecError, CodecParams, CodedFragment, DecodingSet,
};
use crate::coeffgen::{coefficient_row, CoefficientSeed};
use crate::gf256::RowEchelon;
use crate::node::protocol::{handle_frame, Request, Response};
use crate::node::{bootstrap_blocks, recover_block, FragmentStore, NodeConfig, NodeError, PeerError, Peers, RPolicy};
use crate::{sha256, Digest};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Node(#[from] NodeError),
}

/// How many fragments each node keeps for a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RAssignment {
    Constant(usize),
    /// `1 + Geometric(p)` failures, i.e. mean `1/p`.
    Geometric(f64),
    /// Whole-block replication: each node keeps a block with probability `1/c`.
    Replicated(f64),
}

impl FromStr for RAssignment {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::Config(format!("r assignment {s:?}; expected constant:R, geometric:P or replicated:C"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "constant" => {
                let r: usize = value.trim().parse().map_err(|_| bad())?;
                if r == 0 {
                    return Err(SimError::Config("constant r must be at least 1".into()));
                }
                Ok(RAssignment::Constant(r))
            }
            "geometric" => {
                let p: f64 = value.trim().parse().map_err(|_| bad())?;
                if !(p > 0.0 && p < 1.0) {
                    return Err(SimError::Config(format!("geometric p = {p} outside (0, 1)")));
                }
                Ok(RAssignment::Geometric(p))
            }
            "replicated" => {
                let c: f64 = value.trim().parse().map_err(|_| bad())?;
                if c.is_nan() || c <= 1.0 {
                    return Err(SimError::Config(format!("compression factor {c} must exceed 1")));
                }
                Ok(RAssignment::Replicated(c))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for RAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RAssignment::Constant(r) => write!(f, "constant:{r}"),
            RAssignment::Geometric(p) => write!(f, "geometric:{p}"),
            RAssignment::Replicated(c) => write!(f, "replicated:{c}"),
        }
    }
}

impl<'de> Deserialize<'de> for RAssignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl RAssignment {
    /// Fragment count for one node; geometric draws are capped at the row index range.
    fn draw(&self, rng: &mut impl Rng) -> usize {
        match *self {
            RAssignment::Constant(r) => r,
            RAssignment::Geometric(p) => {
                let failures = Geometric::new(p).expect("validated p").sample(rng);
                (failures.min(u16::MAX as u64) + 1) as usize
            }
            RAssignment::Replicated(_) => unreachable!("replication has no coded fragments"),
        }
    }

    /// The analytic irrecoverability for `n` nodes, when the model has one.
    pub fn predicted(&self, n: usize, k: usize) -> f64 {
        match *self {
            RAssignment::Constant(r) => irrecoverability_coded(&Distribution::constant(r), n, k),
            RAssignment::Geometric(p) => {
                irrecoverability_coded(&Distribution::geometric(p).expect("validated p"), n, k)
            }
            RAssignment::Replicated(c) => irrecoverability_replicated(c, n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ByzantineMode {
    /// Flip one bit in every fragment served.
    #[default]
    Bitflip,
    /// Serve fragments correctly encoded from a different payload.
    TamperedPayload,
    /// Serve fragments re-encoded from the true block; indistinguishable from honest.
    HonestReencode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[default]
    Availability,
    Recovery,
    Tamper,
}

fn default_chain_length() -> usize {
    10
}
fn default_retry_budget() -> usize {
    2
}
fn default_trials() -> usize {
    1000
}
fn default_decode_sample() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub master_seed: u64,
    pub n_nodes: usize,
    pub k: usize,
    pub block_size: usize,
    pub r: RAssignment,
    #[serde(default = "default_chain_length")]
    pub chain_length: usize,
    #[serde(default)]
    pub min_payload: usize,
    /// Defaults to the largest payload a block can hold.
    #[serde(default)]
    pub max_payload: Option<usize>,
    #[serde(default)]
    pub churn: f64,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Every this many successful availability trials, run a real encode and decode.
    #[serde(default = "default_decode_sample")]
    pub decode_sample_every: usize,
    #[serde(default)]
    pub byzantine: Vec<u64>,
    #[serde(default)]
    pub byzantine_mode: ByzantineMode,
    #[serde(default)]
    pub scenario: Scenario,
}

impl FromStr for SimConfig {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        let config: SimConfig = toml::from_str(s)?;
        config.validate()?;
        Ok(config)
    }
}

impl SimConfig {
    /// A config with the given network shape and every optional field at its default.
    pub fn new(master_seed: u64, n_nodes: usize, k: usize, block_size: usize, r: RAssignment) -> Self {
        SimConfig {
            master_seed,
            n_nodes,
            k,
            block_size,
            r,
            chain_length: default_chain_length(),
            min_payload: 0,
            max_payload: None,
            churn: 0.0,
            retry_budget: default_retry_budget(),
            trials: default_trials(),
            decode_sample_every: default_decode_sample(),
            byzantine: Vec::new(),
            byzantine_mode: ByzantineMode::default(),
            scenario: Scenario::default(),
        }
    }

    pub fn params(&self) -> Result<CodecParams, SimError> {
        Ok(CodecParams::new(self.k, self.block_size)?)
    }

    fn payload_range(&self) -> Result<(usize, usize), SimError> {
        let cap = self.params()?.max_payload();
        let max = self.max_payload.unwrap_or(cap);
        if max > cap || self.min_payload > max {
            return Err(SimError::Config(format!(
                "payload range {}..={max} does not fit blocks of {} bytes",
                self.min_payload, self.block_size
            )));
        }
        Ok((self.min_payload, max))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params()?;
        self.payload_range()?;
        if self.n_nodes == 0 {
            return Err(SimError::Config("n_nodes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.churn) {
            return Err(SimError::Config(format!("churn {} outside [0, 1)", self.churn)));
        }
        if let Some(b) = self.byzantine.iter().find(|&&b| b >= self.n_nodes as u64) {
            return Err(SimError::Config(format!("byzantine node {b} does not exist")));
        }
        Ok(())
    }
}

/// Seed for one sub-stream of the simulation, independent of platform.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_be_bytes());
    h.update(label.as_bytes());
    for i in indices {
        h.update(i.to_be_bytes());
    }
    u64::from_be_bytes(h.finalize()[..8].try_into().unwrap())
}

fn rng_for(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, indices))
}

/// Counters from an availability run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AvailabilityStats {
    pub trials: u64,
    /// Trials where the nodes held fewer than `k` fragments in total.
    pub shortfall: u64,
    /// Trials with at least `k` fragments but no full-rank subset among all of them.
    pub rank_deficient: u64,
    /// Trials whose first `k` gathered fragments were rank deficient.
    pub first_k_deficient: u64,
    pub decodes_checked: u64,
    pub decode_mismatches: u64,
    /// Analytic irrecoverability for the configured law.
    pub predicted: f64,
}

impl AvailabilityStats {
    pub fn failures(&self) -> u64 {
        self.shortfall + self.rank_deficient
    }

    /// Irrecoverability allowing retries: no full-rank system among all stored fragments.
    pub fn empirical(&self) -> f64 {
        self.failures() as f64 / self.trials as f64
    }

    /// Irrecoverability when only the first `k` gathered fragments are used.
    pub fn empirical_first_k(&self) -> f64 {
        (self.shortfall + self.first_k_deficient) as f64 / self.trials as f64
    }

    /// Binomial standard error of the empirical rate under probability `p`.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Normal-approximation interval `empirical ± z·σ̂`.
    pub fn confidence_interval(&self, z: f64) -> (f64, f64) {
        let e = self.empirical();
        let half = z * self.sigma(e);
        ((e - half).max(0.0), (e + half).min(1.0))
    }

    /// Distance from `expected` in units of the binomial error at `expected`.
    pub fn z_score(&self, expected: f64) -> f64 {
        let s = self.sigma(expected);
        let d = self.empirical() - expected;
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d.abs() / s
        }
    }
}

/// Counters from a simulation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimMetrics {
    pub attempted: u64,
    pub successes: u64,
    pub failures: u64,
    pub unrecoverable: u64,
    /// Recoveries that failed although the reachable nodes held at least `k` fragments.
    pub unrecoverable_with_equations: u64,
    pub tamper_detections: u64,
    /// Detections that repaired the block from a clean subset.
    pub repaired: u64,
    /// Recoveries whose failed decode used a byzantine node's fragments.
    pub byzantine_affected: u64,
    /// Affected recoveries whose suspect set names a byzantine contributor.
    pub byzantine_identified: u64,
    /// Suspects that are honest nodes.
    pub honest_suspects: u64,
    /// Returned payloads whose hash differs from the chain's record. Must stay zero.
    pub false_accepts: u64,
    pub fragments_transferred: u64,
    /// LSBF record bytes carried in FRAGMENTS replies.
    pub wire_bytes: u64,
    /// All frame bytes, requests and replies.
    pub frame_bytes: u64,
    pub peers_contacted_min: u64,
    pub peers_contacted_max: u64,
    pub peers_contacted_total: u64,
    pub storage_bytes_min: u64,
    pub storage_bytes_max: u64,
    pub storage_bytes_total: u64,
    /// Failure counts keyed by the rank that was reachable.
    pub unrecoverable_ranks: BTreeMap<usize, u64>,
    pub availability: Option<AvailabilityStats>,
    /// SHA-256 over the ordered event log.
    pub transcript: Digest,
}

impl SimMetrics {
    /// Flat `name value` rows.
    pub fn table(&self) -> Vec<(String, f64)> {
        let mut rows: Vec<(String, f64)> = vec![
            ("attempted".into(), self.attempted as f64),
            ("successes".into(), self.successes as f64),
            ("failures".into(), self.failures as f64),
            ("unrecoverable".into(), self.unrecoverable as f64),
            ("unrecoverable_with_equations".into(), self.unrecoverable_with_equations as f64),
            ("tamper_detections".into(), self.tamper_detections as f64),
            ("repaired".into(), self.repaired as f64),
            ("byzantine_affected".into(), self.byzantine_affected as f64),
            ("byzantine_identified".into(), self.byzantine_identified as f64),
            ("honest_suspects".into(), self.honest_suspects as f64),
            ("false_accepts".into(), self.false_accepts as f64),
            ("fragments_transferred".into(), self.fragments_transferred as f64),
            ("wire_bytes".into(), self.wire_bytes as f64),
            ("frame_bytes".into(), self.frame_bytes as f64),
            ("peers_contacted_min".into(), self.peers_contacted_min as f64),
            ("peers_contacted_max".into(), self.peers_contacted_max as f64),
            ("peers_contacted_total".into(), self.peers_contacted_total as f64),
            ("storage_bytes_min".into(), self.storage_bytes_min as f64),
            ("storage_bytes_max".into(), self.storage_bytes_max as f64),
            ("storage_bytes_total".into(), self.storage_bytes_total as f64),
        ];
        for (rank, count) in &self.unrecoverable_ranks {
            rows.push((format!("unrecoverable_rank_{rank}"), *count as f64));
        }
        if let Some(a) = &self.availability {
            rows.extend([
                ("trials".into(), a.trials as f64),
                ("shortfall".into(), a.shortfall as f64),
                ("rank_deficient".into(), a.rank_deficient as f64),
                ("first_k_deficient".into(), a.first_k_deficient as f64),
                ("decodes_checked".into(), a.decodes_checked as f64),
                ("decode_mismatches".into(), a.decode_mismatches as f64),
                ("empirical".into(), a.empirical()),
                ("empirical_first_k".into(), a.empirical_first_k()),
                ("predicted".into(), a.predicted),
                ("z_score".into(), a.z_score(a.predicted)),
            ]);
        }
        rows
    }

    pub fn write_table<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        for (name, value) in self.table() {
            writeln!(out, "{name} {value}")?;
        }
        writeln!(out, "# transcript {}", hex_digest(&self.transcript))
    }

    pub fn summary(&self) -> String {
        if let Some(a) = &self.availability {
            let (lo, hi) = a.confidence_interval(3.0);
            return format!(
                "{} trials: irrecoverable {:.6} (3σ interval [{lo:.6}, {hi:.6}]), first-k only {:.6}, \
                 predicted {:.6}; {} real decodes, {} mismatches",
                a.trials,
                a.empirical(),
                a.empirical_first_k(),
                a.predicted,
                a.decodes_checked,
                a.decode_mismatches
            );
        }
        let mean_peers = if self.attempted == 0 { 0.0 } else { self.peers_contacted_total as f64 / self.attempted as f64 };
        let mut s = format!(
            "{} recoveries: {} ok, {} failed ({} unrecoverable, {} tamper detections, {} repaired); \
             peers per recovery {}..{} (mean {mean_peers:.1}); {} fragments, {} wire bytes; false accepts {}",
            self.attempted,
            self.successes,
            self.failures,
            self.unrecoverable,
            self.tamper_detections,
            self.repaired,
            self.peers_contacted_min,
            self.peers_contacted_max,
            self.fragments_transferred,
            self.wire_bytes,
            self.false_accepts
        );
        if self.byzantine_affected > 0 {
            s.push_str(&format!(
                "; byzantine affected {}, identified {}",
                self.byzantine_affected, self.byzantine_identified
            ));
        }
        s
    }
}

fn hex_digest(d: &Digest) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Monte Carlo estimate of the probability that a chosen block is irrecoverable.
///
/// Each trial draws fresh node identities and a fragment count per node, then asks whether
/// the stored coefficient rows contain a full-rank system. A sample of successful trials
/// also runs a real encode and decode.
pub fn run_availability(config: &SimConfig, trials: usize) -> Result<SimMetrics, SimError> {
    config.validate()?;
    if trials == 0 {
        return Err(SimError::Config("trials must be positive".into()));
    }
    let params = config.params()?;
    let k = params.k();
    let n = config.n_nodes;
    let mut stats = AvailabilityStats { predicted: config.r.predicted(n, k), ..Default::default() };
    let mut log = Sha256::new();
    let mut successes = 0u64;

    for t in 0..trials as u64 {
        let mut rng = rng_for(config.master_seed, "availability", &[t]);
        stats.trials += 1;
        let height = rng.gen_range(0..config.chain_length.max(1) as u64);

        if let RAssignment::Replicated(c) = config.r {
            let held = (0..n).any(|_| rng.gen_bool(1.0 / c));
            if !held {
                stats.shortfall += 1;
            }
            log.update([u8::from(held)]);
            continue;
        }

        let nodes: Vec<(u64, usize)> = (0..n).map(|_| (rng.gen::<u64>(), config.r.draw(&mut rng))).collect();
        let total: usize = nodes.iter().map(|n| n.1).sum();
        log.update((total as u64).to_be_bytes());
        if total < k {
            stats.shortfall += 1;
            log.update([0]);
            continue;
        }

        // gather rows in a random peer order, as a recovering node would
        let mut order = nodes.clone();
        order.shuffle(&mut rng);
        let mut echelon = RowEchelon::new(k);
        let mut used = Vec::new();
        let mut seen = 0;
        'gather: for &(id, r) in &order {
            let seed = CoefficientSeed::new(id, height);
            for row in 0..r {
                if echelon.insert(&coefficient_row(seed, k, row)) {
                    used.push((id, row));
                }
                seen += 1;
                if seen == k && !echelon.is_full() {
                    stats.first_k_deficient += 1;
                }
                if echelon.is_full() {
                    break 'gather;
                }
            }
        }
        if !echelon.is_full() {
            stats.rank_deficient += 1;
            log.update([1]);
            continue;
        }
        log.update([2]);
        successes += 1;

        if config.decode_sample_every > 0 && successes % config.decode_sample_every as u64 == 1 {
            stats.decodes_checked += 1;
            if !sample_decode(&params, height, &used, &mut rng)? {
                stats.decode_mismatches += 1;
            }
        }
    }

    let metrics = SimMetrics {
        attempted: stats.trials,
        successes: stats.trials - stats.failures(),
        failures: stats.failures(),
        transcript: log.finalize().into(),
        availability: Some(stats),
        ..Default::default()
    };
    Ok(metrics)
}

/// Encodes a random payload into exactly the rows `used` and checks they decode back.
fn sample_decode(params: &CodecParams, height: u64, used: &[(u64, usize)], rng: &mut ChaCha8Rng) -> Result<bool, SimError> {
    let len = rng.gen_range(0..=params.max_payload());
    let mut payload = vec![0u8; len];
    rng.fill(payload.as_mut_slice());
    let plain = fragment_block(params, &payload)?;
    let mut set = DecodingSet::empty(height);
    for &(id, row) in used {
        let f = encode_rows(params, CoefficientSeed::new(id, height), &plain, row..row + 1)?.remove(0);
        set.push(f)?;
    }
    Ok(decode_block(params, &set).ok().as_deref() == Some(payload.as_slice()))
}

#[derive(Debug)]
enum Envelope {
    Request { from: u64, to: u64, frame: Vec<u8> },
    Reply { to: u64, frame: Vec<u8> },
}

/// The simulated transport: every exchange is a request frame and a reply frame passed
/// through one FIFO queue.
struct SimNetwork<'a> {
    stores: &'a [FragmentStore],
    params: CodecParams,
    /// The node doing the recovery.
    local: u64,
    down: &'a HashSet<u64>,
    byzantine: &'a HashMap<(u64, u64), Tamper>,
    queue: VecDeque<Envelope>,
    wire_bytes: u64,
    frame_bytes: u64,
    fragments: u64,
}

#[derive(Debug, Clone)]
enum Tamper {
    Bitflip,
    Substitute(Vec<CodedFragment>),
}

impl SimNetwork<'_> {
    fn deliver(&mut self) -> Option<Vec<u8>> {
        let mut reply = None;
        while let Some(env) = self.queue.pop_front() {
            match env {
                Envelope::Request { from, to, frame } => {
                    self.frame_bytes += frame.len() as u64;
                    let store = &self.stores[to as usize];
                    let mut out = handle_frame(store, &frame);
                    if let Ok(Request::GetFragments { height, max }) = Request::decode(&frame) {
                        if let Some(t) = self.byzantine.get(&(to, height)) {
                            out = self.tamper(t, &out, max);
                        }
                    }
                    self.queue.push_back(Envelope::Reply { to: from, frame: out });
                }
                Envelope::Reply { to, frame } => {
                    debug_assert_eq!(to, self.local);
                    self.frame_bytes += frame.len() as u64;
                    reply = Some(frame);
                }
            }
        }
        reply
    }

    fn tamper(&self, t: &Tamper, honest: &[u8], max: u16) -> Vec<u8> {
        let Ok(Response::Fragments { params, mut fragments }) = Response::decode(honest, &self.params) else {
            return honest.to_vec();
        };
        match t {
            Tamper::Bitflip => {
                for f in &mut fragments {
                    let at = f.data.len() / 2;
                    f.data[at] ^= 0x01;
                }
            }
            Tamper::Substitute(subs) => fragments = subs.iter().take(max as usize).cloned().collect(),
        }
        Response::Fragments { params, fragments }.encode()
    }
}

impl Peers for SimNetwork<'_> {
    fn peer_ids(&self) -> Vec<u64> {
        (0..self.stores.len() as u64).collect()
    }

    fn get_fragments(&mut self, peer: u64, height: u64, max: u16) -> Result<Vec<CodedFragment>, PeerError> {
        if peer as usize >= self.stores.len() || (peer != self.local && self.down.contains(&peer)) {
            return Err(PeerError::Unreachable);
        }
        let frame = Request::GetFragments { height, max }.encode();
        self.queue.push_back(Envelope::Request { from: self.local, to: peer, frame });
        let reply = self.deliver().ok_or(PeerError::Unreachable)?;
        match Response::decode(&reply, &self.params).map_err(|e| PeerError::Malformed(e.0))? {
            Response::Fragments { fragments, .. } => {
                let records = (reply.len() - 3) as u64;
                debug_assert_eq!(records, fragments.len() as u64 * self.params.record_len() as u64);
                self.wire_bytes += records;
                self.fragments += fragments.len() as u64;
                Ok(fragments)
            }
            Response::Error(crate::node::protocol::ErrorCode::UnknownBlock) => Err(PeerError::UnknownBlock),
            _ => Err(PeerError::Unreachable),
        }
    }
}

struct Prepared {
    params: CodecParams,
    stores: Vec<FragmentStore>,
    configs: Vec<NodeConfig>,
    /// Payload hash of every block, the only thing kept from the plaintext chain.
    expected: Vec<Digest>,
    byzantine: HashMap<(u64, u64), Tamper>,
}

fn prepare(config: &SimConfig, byzantine: &[u64]) -> Result<Prepared, SimError> {
    config.validate()?;
    if matches!(config.r, RAssignment::Replicated(_)) {
        return Err(SimError::Config("recovery scenarios need a coded r assignment".into()));
    }
    if config.chain_length == 0 {
        return Err(SimError::Config("chain_length must be at least 1".into()));
    }
    if let Some(b) = byzantine.iter().find(|&&b| b >= config.n_nodes as u64) {
        return Err(SimError::Config(format!("byzantine node {b} does not exist")));
    }
    let params = config.params()?;
    let (lo, hi) = config.payload_range()?;
    let chain = build_chain(derive_seed(config.master_seed, "chain", &[]), config.chain_length, lo, hi);

    let mut r_rng = rng_for(config.master_seed, "r", &[]);
    let mut stores = Vec::with_capacity(config.n_nodes);
    let mut configs = Vec::with_capacity(config.n_nodes);
    for id in 0..config.n_nodes as u64 {
        let r = config.r.draw(&mut r_rng);
        let node = NodeConfig::new(id, params, RPolicy::Constant(r)).with_retry_budget(config.retry_budget);
        let mut store = FragmentStore::in_memory(id, params);
        bootstrap_blocks(&node, &mut store, &chain)?;
        stores.push(store);
        configs.push(node);
    }

    let mut tampering = HashMap::new();
    for &b in byzantine {
        let r = configs[b as usize].r_policy.r_for(0, 0);
        for block in &chain {
            let h = block.height();
            let seed = CoefficientSeed::new(b, h);
            let t = match config.byzantine_mode {
                ByzantineMode::Bitflip => Tamper::Bitflip,
                ByzantineMode::HonestReencode => {
                    Tamper::Substitute(encode_rows(&params, seed, &fragment_block(&params, &block.payload)?, 0..r)?)
                }
                ByzantineMode::TamperedPayload => {
                    let mut forged = block.payload.clone();
                    match forged.first_mut() {
                        Some(x) => *x ^= 0xFF,
                        None => forged.push(0xFF),
                    }
                    if forged.len() > params.max_payload() {
                        forged.truncate(params.max_payload());
                        forged[0] ^= 0x0F;
                    }
                    Tamper::Substitute(encode_rows(&params, seed, &fragment_block(&params, &forged)?, 0..r)?)
                }
            };
            tampering.insert((b, h), t);
        }
    }

    let expected = chain.iter().map(|b| b.header.payload_hash).collect();
    drop(chain);
    Ok(Prepared { params, stores, configs, expected, byzantine: tampering })
}

fn run_network(config: &SimConfig, prepared: Prepared, byzantine: &HashSet<u64>) -> Result<SimMetrics, SimError> {
    let Prepared { params, stores, configs, expected, byzantine: tampering } = prepared;
    let k = params.k();
    let mut m = SimMetrics { peers_contacted_min: u64::MAX, storage_bytes_min: u64::MAX, ..Default::default() };
    for s in &stores {
        let b = s.fragment_bytes() as u64;
        m.storage_bytes_min = m.storage_bytes_min.min(b);
        m.storage_bytes_max = m.storage_bytes_max.max(b);
        m.storage_bytes_total += b;
    }
    let mut log = Sha256::new();

    for (h, expected_hash) in expected.iter().enumerate() {
        let h = h as u64;
        let mut churn_rng = rng_for(config.master_seed, "churn", &[h]);
        let down: HashSet<u64> =
            (0..stores.len() as u64).filter(|_| config.churn > 0.0 && churn_rng.gen_bool(config.churn)).collect();

        for node in &configs {
            let id = node.node_id;
            let alive_equations: usize = stores
                .iter()
                .filter(|s| s.node_id() == id || !down.contains(&s.node_id()))
                .map(|s| s.get(h).map_or(0, |r| r.r()))
                .sum();
            let mut net = SimNetwork {
                stores: &stores,
                params,
                local: id,
                down: &down,
                byzantine: &tampering,
                queue: VecDeque::new(),
                wire_bytes: 0,
                frame_bytes: 0,
                fragments: 0,
            };
            let mut rng = rng_for(config.master_seed, "recover", &[h, id]);
            let outcome = recover_block(node, h, &mut net, expected_hash, &mut rng);
            m.attempted += 1;
            m.wire_bytes += net.wire_bytes;
            m.frame_bytes += net.frame_bytes;
            m.fragments_transferred += net.fragments;

            log.update(h.to_be_bytes());
            log.update(id.to_be_bytes());
            match outcome {
                Ok(rec) => {
                    if sha256(&rec.payload) != *expected_hash {
                        m.false_accepts += 1;
                    }
                    m.successes += 1;
                    let peers = rec.peers_contacted as u64;
                    m.peers_contacted_min = m.peers_contacted_min.min(peers);
                    m.peers_contacted_max = m.peers_contacted_max.max(peers);
                    m.peers_contacted_total += peers;
                    log.update([0]);
                    log.update(peers.to_be_bytes());
                    log.update(rec.payload.len().to_be_bytes());
                }
                Err(NodeError::Unrecoverable { rank }) => {
                    m.failures += 1;
                    m.unrecoverable += 1;
                    *m.unrecoverable_ranks.entry(rank).or_default() += 1;
                    if alive_equations >= k {
                        m.unrecoverable_with_equations += 1;
                    }
                    log.update([1]);
                    log.update(rank.to_be_bytes());
                }
                Err(NodeError::TamperDetected(report)) => {
                    m.failures += 1;
                    m.tamper_detections += 1;
                    if let Some(p) = &report.repaired {
                        m.repaired += 1;
                        if sha256(p) != *expected_hash {
                            m.false_accepts += 1;
                        }
                    }
                    if report.contributors.iter().any(|c| byzantine.contains(c)) {
                        m.byzantine_affected += 1;
                        if report.suspects.iter().any(|s| byzantine.contains(s)) {
                            m.byzantine_identified += 1;
                        }
                    }
                    m.honest_suspects += report.suspects.iter().filter(|s| !byzantine.contains(s)).count() as u64;
                    log.update([2]);
                    for s in &report.suspects {
                        log.update(s.to_be_bytes());
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    if m.attempted == 0 || m.successes == 0 {
        m.peers_contacted_min = 0;
    }
    if stores.is_empty() {
        m.storage_bytes_min = 0;
    }
    m.transcript = log.finalize().into();
    Ok(m)
}

/// Bootstraps every node from one chain, discards the plaintext, then has every node
/// recover every block from its peers.
pub fn run_recovery_scenario(config: &SimConfig) -> Result<SimMetrics, SimError> {
    let prepared = prepare(config, &[])?;
    run_network(config, prepared, &HashSet::new())
}

/// [`run_recovery_scenario`] with the `byzantine` nodes serving bad fragments.
pub fn run_tamper_scenario(config: &SimConfig, byzantine: &[u64]) -> Result<SimMetrics, SimError> {
    let prepared = prepare(config, byzantine)?;
    run_network(config, prepared, &byzantine.iter().copied().collect())
}

/// Runs whatever `config.scenario` names.
pub fn run(config: &SimConfig) -> Result<SimMetrics, SimError> {
    match config.scenario {
        Scenario::Availability => run_availability(config, config.trials),
        Scenario::Recovery => run_recovery_scenario(config),
        Scenario::Tamper => run_tamper_scenario(config, &config.byzantine),
    }
}
