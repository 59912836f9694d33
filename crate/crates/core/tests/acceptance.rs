//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line and then asserts.
//! Tests share a lock so timing-sensitive ones never overlap.

use std::cell::Cell;
use std::rc::Rc;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use lsnode::analysis::{min_nodes_for_threshold, network_load, Distribution, Model};
use lsnode::bench::{bench_grid, encode_spread_across_k, Operation};
use lsnode::chain::{build_chain, write_chain, Block, ChainReader};
use lsnode::codec::{decode_block, encode_fragments, CodecError, CodecParams, DecodingSet};
use lsnode::coeffgen::CoefficientSeed;
use lsnode::gf256::{add, inv, mul};
use lsnode::node::{bootstrap, FragmentStore, NodeConfig, RPolicy};
use lsnode::simnet::{run_availability, run_recovery_scenario, run_tamper_scenario, RAssignment, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, ok: bool, elapsed: Duration, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} ({:.2}s) {detail}", elapsed.as_secs_f64());
}

#[test]
fn criterion_01_field() {
    let _g = serial();
    let start = Instant::now();
    let inverses = (1..=255u8).all(|a| mul(a, inv(a).unwrap()) == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut axioms = true;
    for _ in 0..100_000 {
        let (a, b, c): (u8, u8, u8) = rng.gen();
        axioms &= mul(a, b) == mul(b, a)
            && add(a, b) == add(b, a)
            && mul(mul(a, b), c) == mul(a, mul(b, c))
            && add(add(a, b), c) == add(a, add(b, c))
            && mul(a, add(b, c)) == add(mul(a, b), mul(a, c))
            && mul(a, 1) == a
            && add(a, 0) == a
            && add(a, a) == 0
            && mul(a, 0) == 0;
    }
    let elapsed = start.elapsed();
    let ok = inverses && axioms && elapsed < Duration::from_secs(5);
    report(1, ok, elapsed, &format!("inverses {inverses}, 1e5 axiom triples {axioms}"));
    assert!(ok);
}

#[test]
fn criterion_02_codec_round_trip() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    let mut runs = 0;
    for &k in &[1usize, 2, 10, 25, 50, 100] {
        for &size in &[1_000usize, 64_000, 1_000_000] {
            let params = CodecParams::rounded_up(k, size).unwrap();
            for i in 0..100 {
                let len = rng.gen_range(0..=params.max_payload());
                let mut payload = vec![0u8; len];
                rng.fill(payload.as_mut_slice());
                let seed = CoefficientSeed::new(rng.gen(), i);
                let set = DecodingSet::new(i, encode_fragments(&params, seed, &payload, k).unwrap()).unwrap();
                runs += 1;
                match decode_block(&params, &set) {
                    Ok(out) if out == payload => {}
                    // a singular k x k system from one node is a rank event, not a codec error
                    Err(CodecError::InsufficientRank { .. }) => {
                        let mut more = set.into_fragments();
                        more.extend(encode_fragments(&params, CoefficientSeed::new(seed.node_id ^ 1, i), &payload, 2).unwrap());
                        let set = DecodingSet::new(i, more).unwrap();
                        if decode_block(&params, &set).ok().as_deref() != Some(payload.as_slice()) {
                            failures.push((k, size, i));
                        }
                    }
                    _ => failures.push((k, size, i)),
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(60);
    report(2, ok, elapsed, &format!("{runs} round trips, {} mismatches", failures.len()));
    assert!(ok, "{failures:?}");
}

#[test]
fn criterion_03_recovery_probability() {
    let _g = serial();
    let start = Instant::now();
    let k = 16;
    let params = CodecParams::new(k, k * 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 100_000u64;
    let attempt = |rng: &mut ChaCha8Rng, t: u64, fragments: usize| -> bool {
        let mut payload = vec![0u8; rng.gen_range(0..=params.max_payload())];
        rng.fill(payload.as_mut_slice());
        let mut set = DecodingSet::empty(t);
        for _ in 0..fragments {
            let seed = CoefficientSeed::new(rng.gen(), t);
            set.push(encode_fragments(&params, seed, &payload, 1).unwrap().remove(0)).unwrap();
        }
        match decode_block(&params, &set) {
            Ok(out) => {
                assert_eq!(out, payload);
                true
            }
            Err(CodecError::InsufficientRank { .. }) => false,
            Err(e) => panic!("{e}"),
        }
    };
    let failed_k = (0..trials).filter(|&t| !attempt(&mut rng, t, k)).count();
    let failed_k2 = (0..trials).filter(|&t| !attempt(&mut rng, t, k + 2)).count();
    let rate = failed_k as f64 / trials as f64;
    let elapsed = start.elapsed();
    let ok = (rate - 0.0039).abs() <= 0.002 && failed_k2 == 0 && elapsed < Duration::from_secs(120);
    report(3, ok, elapsed, &format!("k fragments fail rate {rate:.5}, k+2 failures {failed_k2}"));
    assert!(ok);
}

#[test]
fn criterion_04_threshold_nodes() {
    let _g = serial();
    let start = Instant::now();
    let coded = min_nodes_for_threshold(&Model::Coded { f: Distribution::geometric(0.2).unwrap(), k: 100 }, 5e-6).unwrap();
    let replicated = min_nodes_for_threshold(&Model::Replicated { c: 20.0 }, 5e-6).unwrap();
    let elapsed = start.elapsed();
    let ok = coded == 37 && replicated == 238 && elapsed < Duration::from_secs(1);
    report(4, ok, elapsed, &format!("coded {coded} (want 37), replicated {replicated} (want 238)"));
    assert_eq!(replicated, 238);
    assert_eq!(coded, 37, "exact evaluation of the coded model crosses 5e-6 at n = {coded}");
}

#[test]
fn criterion_05_model_vs_simulation() {
    let _g = serial();
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for &n in &[10usize, 20, 30] {
        let mut config = SimConfig::new(50 + n as u64, n, 100, 100 * 16, RAssignment::Geometric(0.2));
        config.chain_length = 1000;
        let a = run_availability(&config, 10_000).unwrap().availability.unwrap();
        let z = a.z_score(a.predicted);
        ok &= z <= 3.0 && a.decode_mismatches == 0;
        details.push(format!("n={n} emp {:.5} model {:.5} z {z:.2}", a.empirical(), a.predicted));
    }
    let config = SimConfig::new(55, 50, 100, 100 * 16, RAssignment::Replicated(20.0));
    let a = run_availability(&config, 10_000).unwrap().availability.unwrap();
    let z = a.z_score(0.95f64.powi(50));
    ok &= z <= 3.0 && (a.predicted - 0.0770).abs() < 1e-4;
    details.push(format!("replicated n=50 emp {:.5} model {:.5} z {z:.2}", a.empirical(), a.predicted));
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(180);
    report(5, ok, elapsed, &details.join("; "));
    assert!(ok);
}

#[test]
fn criterion_06_end_to_end_recovery() {
    let _g = serial();
    let start = Instant::now();
    let mut config = SimConfig::new(6, 100, 100, 100 * 32, RAssignment::Constant(5));
    config.chain_length = 10;
    let full = run_recovery_scenario(&config).unwrap();
    let full_ok = full.attempted == 1000
        && full.successes == 1000
        && full.false_accepts == 0
        && full.peers_contacted_min >= 20;
    config.n_nodes = 10;
    let starved = run_recovery_scenario(&config).unwrap();
    let starved_ok = starved.attempted == 100
        && starved.unrecoverable == 100
        && starved.unrecoverable_ranks.get(&50) == Some(&100);
    let elapsed = start.elapsed();
    let ok = full_ok && starved_ok && elapsed < Duration::from_secs(120);
    report(6, ok, elapsed, &format!("100 nodes: {}; 10 nodes: {}", full.summary(), starved.summary()));
    assert!(ok);
}

#[test]
fn criterion_07_integrity() {
    let _g = serial();
    let start = Instant::now();
    let mut config = SimConfig::new(7, 100, 100, 100 * 16, RAssignment::Constant(5));
    config.chain_length = 4;
    let mut ok = true;
    let mut details = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for b in 1..=5 {
        let byzantine: Vec<u64> = rand::seq::index::sample(&mut rng, 100, b).into_iter().map(|i| i as u64).collect();
        let m = run_tamper_scenario(&config, &byzantine).unwrap();
        ok &= m.false_accepts == 0 && m.byzantine_affected > 0 && m.byzantine_identified == m.byzantine_affected;
        details.push(format!("{b} byzantine: affected {} identified {} false accepts {}", m.byzantine_affected, m.byzantine_identified, m.false_accepts));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    report(7, ok, elapsed, &details.join("; "));
    assert!(ok);
}

#[test]
fn criterion_08_network_load() {
    let _g = serial();
    let start = Instant::now();
    let load = network_load(5, 1000, 10e6, 100, 20).unwrap();
    let ok = load.full_node_bps == 2e9 && load.ls_node_bps == 100e6;
    report(8, ok, start.elapsed(), &format!("full node {} bps, LS node {} bps", load.full_node_bps, load.ls_node_bps));
    assert!(ok);
}

#[test]
fn criterion_09_complexity_scaling() {
    let _g = serial();
    let start = Instant::now();
    let grid = bench_grid(&[25, 50, 100], &[5, 10], 1_000_000, 5, 9).unwrap();
    let enc = |k, r| grid.iter().find(|x| x.operation == Operation::Encode && x.k == k && x.r == r).unwrap().throughput;
    let dec = |k| grid.iter().find(|x| x.operation == Operation::Decode && x.k == k).unwrap().throughput;
    let spread = encode_spread_across_k(&grid, 5).unwrap();
    let enc_ratio = enc(100, 10) / enc(100, 5);
    let dec_ratio = dec(100) / dec(50);
    let within = |x: f64| (x / 0.5 - 1.0).abs() <= 0.3;
    let elapsed = start.elapsed();
    let ok = spread <= 0.25 && within(enc_ratio) && within(dec_ratio) && elapsed < Duration::from_secs(300);
    report(
        9,
        ok,
        elapsed,
        &format!(
            "encode spread over k {spread:.3}, encode r10/r5 {enc_ratio:.3}, decode k100/k50 {dec_ratio:.3}, \
             encode k=100 r=5 {:.0} Mbps, decode k=100 {:.0} Mbps",
            enc(100, 5) * 8e-6,
            dec(100) * 8e-6
        ),
    );
    assert!(ok);
}

/// A block whose lifetime is counted.
struct Tracked {
    block: Block,
    live: Rc<Cell<usize>>,
}

impl AsRef<Block> for Tracked {
    fn as_ref(&self) -> &Block {
        &self.block
    }
}

impl Drop for Tracked {
    fn drop(&mut self) {
        self.live.set(self.live.get() - 1);
    }
}

#[test]
fn criterion_10_bootstrap_streaming() {
    let _g = serial();
    let start = Instant::now();
    let chain = build_chain(10, 100, 100, 4000);
    let mut exported = Vec::new();
    write_chain(&chain, &mut exported).unwrap();
    drop(chain);

    let live = Rc::new(Cell::new(0usize));
    let peak = Rc::new(Cell::new(0usize));
    let source = ChainReader::new(exported.as_slice()).map(|b| {
        b.map(|block| {
            live.set(live.get() + 1);
            peak.set(peak.get().max(live.get()));
            Tracked { block, live: Rc::clone(&live) }
        })
    });
    let params = CodecParams::new(100, 100 * 41).unwrap();
    let config = NodeConfig::new(1, params, RPolicy::Constant(5));
    let mut store = FragmentStore::in_memory(1, params);
    let r = bootstrap(&config, &mut store, source).unwrap();
    let ok = r.blocks == 100 && peak.get() == 1 && r.peak_plaintext_blocks == 1 && live.get() == 0;
    report(
        10,
        ok,
        start.elapsed(),
        &format!("{} blocks, peak resident blocks {} (node counter {})", r.blocks, peak.get(), r.peak_plaintext_blocks),
    );
    assert!(ok);
}
