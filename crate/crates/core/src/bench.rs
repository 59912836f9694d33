//! Encode and decode throughput measurements.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{decode_block, encode_fragments, encode_rows, fragment_block, CodecError, CodecParams, DecodingSet};
use crate::coeffgen::CoefficientSeed;

pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operation {
    Encode,
    Decode,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::Encode => "encode",
            Operation::Decode => "decode",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub operation: Operation,
    pub k: usize,
    /// Fragments produced per encode; `k` for decodes.
    pub r: usize,
    pub block_size: usize,
    pub repetitions: usize,
    pub median_secs: f64,
    /// Block bytes processed per second, from the median time.
    pub throughput: f64,
}

impl BenchReport {
    pub fn throughput_mbps(&self) -> f64 {
        self.throughput * 8.0 / 1e6
    }
}

/// `a.throughput / b.throughput`; `None` unless both ran on the same block size.
pub fn ratio(a: &BenchReport, b: &BenchReport) -> Option<f64> {
    (a.block_size == b.block_size).then(|| a.throughput / b.throughput)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

fn check_reps(repetitions: usize) -> Result<(), CodecError> {
    if repetitions < MIN_REPETITIONS {
        return Err(CodecError::InvalidParams(format!("need at least {MIN_REPETITIONS} repetitions")));
    }
    Ok(())
}

fn random_block(params: &CodecParams, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut payload = vec![0u8; params.max_payload()];
    rng.fill(payload.as_mut_slice());
    payload
}

/// Times producing `r` coded fragments from an already split block.
pub fn bench_encode(k: usize, r: usize, block_size: usize, repetitions: usize, seed: u64) -> Result<BenchReport, CodecError> {
    check_reps(repetitions)?;
    let params = CodecParams::new(k, block_size)?;
    let plain = fragment_block(&params, &random_block(&params, seed))?;
    let cseed = CoefficientSeed::new(seed, 0);
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let out = encode_rows(&params, cseed, &plain, 0..r)?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    let median_secs = median(times).max(1e-9);
    Ok(BenchReport {
        operation: Operation::Encode,
        k,
        r,
        block_size,
        repetitions,
        median_secs,
        throughput: block_size as f64 / median_secs,
    })
}

/// Times rebuilding a block from `k` coded fragments held by distinct nodes.
pub fn bench_decode(k: usize, block_size: usize, repetitions: usize, seed: u64) -> Result<BenchReport, CodecError> {
    check_reps(repetitions)?;
    let params = CodecParams::new(k, block_size)?;
    let payload = random_block(&params, seed);
    let mut set = DecodingSet::empty(0);
    for node in 0..k as u64 {
        for f in encode_fragments(&params, CoefficientSeed::new(seed.wrapping_add(node), 0), &payload, 1)? {
            set.push(f)?;
        }
    }
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let out = decode_block(&params, &set)?;
        times.push(start.elapsed().as_secs_f64());
        assert!(out == payload, "benchmark decode mismatch");
    }
    let median_secs = median(times).max(1e-9);
    Ok(BenchReport {
        operation: Operation::Decode,
        k,
        r: k,
        block_size,
        repetitions,
        median_secs,
        throughput: block_size as f64 / median_secs,
    })
}

/// Every encode in `ks × rs` and every decode in `ks`, on one block size.
pub fn bench_grid(
    ks: &[usize],
    rs: &[usize],
    block_size: usize,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<BenchReport>, CodecError> {
    let mut out = Vec::new();
    for &k in ks {
        for &r in rs {
            out.push(bench_encode(k, r, block_size, repetitions, seed)?);
        }
    }
    for &k in ks {
        out.push(bench_decode(k, block_size, repetitions, seed)?);
    }
    Ok(out)
}

/// A scaling ratio between two runs of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub label: String,
    pub ratio: f64,
}

/// `encode(2r)/encode(r)` at each `k` and `decode(2k)/decode(k)`, for every doubling present.
pub fn scaling_ratios(reports: &[BenchReport]) -> Vec<Scaling> {
    let mut out = Vec::new();
    for a in reports.iter().filter(|x| x.operation == Operation::Encode) {
        for b in reports.iter().filter(|x| x.operation == Operation::Encode && x.k == a.k && x.r == 2 * a.r) {
            if let Some(ratio) = ratio(b, a) {
                out.push(Scaling { label: format!("encode r={}/r={} at k={}", b.r, a.r, a.k), ratio });
            }
        }
    }
    for a in reports.iter().filter(|x| x.operation == Operation::Decode) {
        for b in reports.iter().filter(|x| x.operation == Operation::Decode && x.k == 2 * a.k) {
            if let Some(ratio) = ratio(b, a) {
                out.push(Scaling { label: format!("decode k={}/k={}", b.k, a.k), ratio });
            }
        }
    }
    out
}

/// Largest relative spread `(max - min) / max` of encode throughput across `k` at each `r`.
pub fn encode_spread_across_k(reports: &[BenchReport], r: usize) -> Option<f64> {
    let xs: Vec<f64> =
        reports.iter().filter(|x| x.operation == Operation::Encode && x.r == r).map(|x| x.throughput).collect();
    if xs.len() < 2 {
        return None;
    }
    let max = xs.iter().copied().fold(f64::MIN, f64::max);
    let min = xs.iter().copied().fold(f64::MAX, f64::min);
    Some((max - min) / max)
}
