use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lsnode::analysis::{
    curve, irrecoverability_coded, irrecoverability_replicated, min_nodes_for_threshold, network_load, write_curve,
    CurveSpec, Distribution, Model,
};
use lsnode::bench::{bench_grid, encode_spread_across_k, scaling_ratios};
use lsnode::chain::{build_chain, validate_next, write_chain, BlockHeader, ChainFault, ChainReader};
use lsnode::codec::{decode_block, encode_fragments, CodecError, CodecParams, CodedFragment, DecodingSet};
use lsnode::coeffgen::CoefficientSeed;
use lsnode::node::{
    bootstrap, prune, recover_block, serve_fragments, FragmentStore, NodeConfig, NodeError, RPolicy, StorePeers,
};
use lsnode::simnet::{self, Scenario, SimConfig};
use lsnode::{sha256, Digest};

mod exit;

use exit::{HashMismatch, Usage};

/// Low-storage blockchain node: coded fragment storage, recovery, analysis and simulation.
///
/// Exit codes: 0 success, 1 other error, 2 usage, 3 insufficient rank or unrecoverable
/// block, 4 corrupt decode, 5 hash mismatch or tampering, 6 malformed input, 7 block
/// too large, 8 I/O.
#[derive(Parser)]
#[command(name = "lsnode", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a file into `--r` coded fragments as LSBF files.
    Encode(EncodeArgs),
    /// Rebuild a file from LSBF fragment files.
    Decode(DecodeArgs),
    /// Measure encode and decode throughput.
    Bench(BenchArgs),
    /// Operate a node's fragment store.
    #[command(subcommand)]
    Node(NodeCommand),
    /// Availability models and network-load arithmetic.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Run the network simulator.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Build or validate exported chains.
    #[command(subcommand)]
    Chain(ChainCommand),
}

#[derive(Args)]
struct CodecFlags {
    /// Plain fragments per block.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Padded block size s_B in bytes; must be a multiple of k.
    #[arg(long, default_value_t = 1_000_000)]
    sb: usize,
}

impl CodecFlags {
    fn params(&self) -> Result<CodecParams> {
        CodecParams::new(self.k, self.sb).map_err(|e| Usage(e.to_string()).into())
    }
}

#[derive(Args)]
struct EncodeArgs {
    /// File to encode.
    input: PathBuf,
    #[command(flatten)]
    codec: CodecFlags,
    /// Coded fragments to produce.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    r: u16,
    #[arg(long, default_value_t = 0)]
    node_id: u64,
    #[arg(long, default_value_t = 0)]
    height: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// LSBF files; each may hold several records.
    #[arg(required = true)]
    fragments: Vec<PathBuf>,
    /// Expected SHA-256 of the payload, hex.
    #[arg(long)]
    hash: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [25usize, 50, 100])]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10])]
    r: Vec<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    sb: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum NodeCommand {
    /// Ingest an exported chain into a new or existing store.
    Bootstrap {
        /// Exported chain file.
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        node_id: u64,
        #[command(flatten)]
        codec: CodecFlags,
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        r: u16,
        /// Age-based r, e.g. "0:8,100:4,1000:1"; overrides --r for old blocks.
        #[arg(long)]
        age_steps: Option<String>,
    },
    /// Answer GET_FRAGMENTS for one height, writing the fragments as LSBF files.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        height: u64,
        #[arg(long, default_value_t = u16::MAX)]
        max: u16,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild a block from peer stores and check it against the local header.
    Recover {
        /// The recovering node's store, which holds the block header.
        #[arg(long)]
        store: PathBuf,
        /// Peer store directories.
        #[arg(long = "peer", required = true)]
        peers: Vec<PathBuf>,
        #[arg(long)]
        height: u64,
        #[arg(long, default_value_t = 2)]
        retry_budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop fragments of one height down to `--r`.
    Prune {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        height: u64,
        #[arg(long)]
        r: usize,
    },
    /// Summarize a store.
    Info {
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Coded model with geometric fragment counts.
    Coded {
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 0.2)]
        p: f64,
        #[arg(long, default_value_t = 5e-6)]
        threshold: f64,
        /// Also print the irrecoverability at this n.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Random whole-block replication with compression factor c.
    Replicated {
        #[arg(long, default_value_t = 20.0)]
        c: f64,
        #[arg(long, default_value_t = 5e-6)]
        threshold: f64,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Write plotting data: the geometric law and both irrecoverability curves.
    Curves {
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 0.2)]
        p: f64,
        #[arg(long, default_value_t = 20.0)]
        c: f64,
        #[arg(long, default_value_t = 300)]
        n_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-node egress when full nodes or low-storage nodes serve light clients.
    Netload {
        #[arg(long, default_value_t = 5)]
        full: u64,
        #[arg(long, default_value_t = 1000)]
        light: u64,
        #[arg(long, default_value_t = 10.0)]
        rate_mbps: f64,
        #[arg(long, default_value_t = 100)]
        ls_nodes: u64,
        #[arg(long, default_value_t = 20)]
        connections: u64,
    },
}

#[derive(Args)]
struct SimArgs {
    /// TOML simulation config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `trials` from the config.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics table destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimCommand {
    Availability(SimArgs),
    Recovery(SimArgs),
    Tamper(SimArgs),
}

#[derive(Subcommand)]
enum ChainCommand {
    /// Write a deterministic pseudo-random chain.
    Build {
        #[arg(long)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        min: usize,
        #[arg(long, default_value_t = 4096)]
        max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream-validate an exported chain.
    Validate {
        chain: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Node(c) => cmd_node(c),
        Command::Analyze(c) => cmd_analyze(c),
        Command::Sim(c) => cmd_sim(c),
        Command::Chain(c) => cmd_chain(c),
    }
}

fn fragment_file_name(f: &CodedFragment) -> String {
    match f.row_index() {
        Some(row) => format!("n{}-h{}-r{row:05}.lsbf", f.node_id, f.block_height),
        None => format!("n{}-h{}-plain.lsbf", f.node_id, f.block_height),
    }
}

fn write_fragments(dir: &Path, params: &CodecParams, fragments: &[CodedFragment]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for f in fragments {
        let path = dir.join(fragment_file_name(f));
        fs::write(&path, f.to_lsbf(params)).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let params = a.codec.params()?;
    let payload = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let seed = CoefficientSeed::new(a.node_id, a.height);
    let fragments = encode_fragments(&params, seed, &payload, a.r as usize)?;
    write_fragments(&a.out, &params, &fragments)
}

fn parse_digest(s: &str) -> Result<Digest> {
    let bytes = hex::decode(s.trim()).map_err(|e| Usage(format!("hash: {e}")))?;
    bytes.try_into().map_err(|_| Usage("hash must be 32 bytes".into()).into())
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let expected = a.hash.as_deref().map(parse_digest).transpose()?;
    let mut params: Option<CodecParams> = None;
    let mut set: Option<DecodingSet> = None;
    for path in &a.fragments {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut input = BufReader::new(file);
        let mut any = false;
        while let Some((p, f)) =
            CodedFragment::read_lsbf(&mut input).with_context(|| format!("reading {}", path.display()))?
        {
            any = true;
            match params {
                None => params = Some(p),
                Some(q) if q != p => {
                    return Err(CodecError::Format(format!(
                        "{} uses k={} s_B={}, earlier files k={} s_B={}",
                        path.display(),
                        p.k(),
                        p.block_size(),
                        q.k(),
                        q.block_size()
                    )))
                    .context("mixed parameters");
                }
                Some(_) => {}
            }
            let s = set.get_or_insert_with(|| DecodingSet::empty(f.block_height));
            s.push(f).with_context(|| format!("adding {}", path.display()))?;
        }
        if !any {
            return Err(CodecError::Format(format!("{} holds no fragment records", path.display())).into());
        }
    }
    let (params, set) = (params.expect("at least one file"), set.expect("at least one record"));
    let payload = decode_block(&params, &set)?;
    if let Some(expected) = expected {
        let got = sha256(&payload);
        if got != expected {
            return Err(HashMismatch { expected, got }.into());
        }
    }
    fs::write(&a.out, &payload).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("decoded {} bytes from {} fragments of block {}", payload.len(), set.len(), set.block_height());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    if a.reps < lsnode::bench::MIN_REPETITIONS {
        bail!(Usage(format!("--reps must be at least {}", lsnode::bench::MIN_REPETITIONS)));
    }
    let reports = bench_grid(&a.k, &a.r, a.sb, a.reps, a.seed)?;
    println!("{:<8} {:>5} {:>5} {:>10} {:>5} {:>12} {:>12}", "op", "k", "r", "block", "reps", "median_s", "Mbps");
    for r in &reports {
        println!(
            "{:<8} {:>5} {:>5} {:>10} {:>5} {:>12.6} {:>12.1}",
            r.operation.to_string(),
            r.k,
            r.r,
            r.block_size,
            r.repetitions,
            r.median_secs,
            r.throughput_mbps()
        );
    }
    for s in scaling_ratios(&reports) {
        println!("ratio {} = {:.3}", s.label, s.ratio);
    }
    for &r in &a.r {
        if let Some(spread) = encode_spread_across_k(&reports, r) {
            println!("encode spread across k at r={r} = {spread:.3}");
        }
    }
    Ok(())
}

fn parse_age_steps(s: &str) -> Result<Vec<(u64, usize)>> {
    s.split(',')
        .map(|step| {
            let (age, r) = step.split_once(':').ok_or_else(|| Usage(format!("age step {step:?}")))?;
            Ok((
                age.trim().parse().map_err(|_| Usage(format!("age {age:?}")))?,
                r.trim().parse().map_err(|_| Usage(format!("r {r:?}")))?,
            ))
        })
        .collect()
}

fn open_store(dir: &Path) -> Result<FragmentStore> {
    FragmentStore::open(dir).with_context(|| format!("opening store {}", dir.display()))
}

fn cmd_node(c: NodeCommand) -> Result<()> {
    match c {
        NodeCommand::Bootstrap { chain, store, node_id, codec, r, age_steps } => {
            let params = codec.params()?;
            let policy = match age_steps {
                Some(s) => RPolicy::ByAge(parse_age_steps(&s)?),
                None => RPolicy::Constant(r as usize),
            };
            let config = NodeConfig::new(node_id, params, policy);
            let mut st = if store.join("STORE").exists() {
                open_store(&store)?
            } else {
                FragmentStore::create(&store, node_id, params)
                    .with_context(|| format!("creating store {}", store.display()))?
            };
            let input = fs::File::open(&chain).with_context(|| format!("opening {}", chain.display()))?;
            // skip what the store already holds
            let have = st.tip().map(|t| t.header.height);
            let source = ChainReader::new(BufReader::new(input))
                .with_max_payload(params.max_payload())
                .filter(|b| match (b, have) {
                    (Ok(b), Some(h)) => b.height() > h,
                    _ => true,
                });
            let report = bootstrap(&config, &mut st, source)?;
            println!(
                "bootstrapped {} blocks, wrote {} fragments; store holds {} heights, {} fragment bytes",
                report.blocks,
                report.fragments_written,
                st.len(),
                st.fragment_bytes()
            );
            Ok(())
        }
        NodeCommand::Serve { store, height, max, out } => {
            let st = open_store(&store)?;
            let fragments = serve_fragments(&st, height, max as usize)?;
            write_fragments(&out, st.params(), &fragments)
        }
        NodeCommand::Recover { store, peers, height, retry_budget, seed, out } => {
            let local = open_store(&store)?;
            let expected = local.get(height).ok_or(NodeError::UnknownBlock(height))?.header.payload_hash;
            let config = NodeConfig::new(local.node_id(), *local.params(), RPolicy::Constant(1))
                .with_retry_budget(retry_budget);
            let mut stores = vec![local];
            for p in &peers {
                let s = open_store(p)?;
                if s.params() != stores[0].params() {
                    return Err(CodecError::Format(format!("peer {} uses different parameters", p.display())).into());
                }
                stores.push(s);
            }
            let mut net = StorePeers::new(stores);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rec = recover_block(&config, height, &mut net, &expected, &mut rng)?;
            fs::write(&out, &rec.payload).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "recovered block {height}: {} bytes from {} peers, {} fragments ({} wire bytes)",
                rec.payload.len(),
                rec.peers_contacted,
                rec.fragments_received,
                net.bytes_received
            );
            Ok(())
        }
        NodeCommand::Prune { store, height, r } => {
            let mut st = open_store(&store)?;
            prune(&mut st, height, r)?;
            println!("block {height} now keeps {r} fragments");
            Ok(())
        }
        NodeCommand::Info { store } => {
            let st = open_store(&store)?;
            let p = st.params();
            println!("node_id {}", st.node_id());
            println!("k {} s_B {} fragment_size {}", p.k(), p.block_size(), p.fragment_size());
            println!("heights {}", st.len());
            println!("fragments {}", st.fragment_count());
            println!("fragment_bytes {}", st.fragment_bytes());
            if let Some(t) = st.tip() {
                println!("tip {} {}", t.header.height, hex::encode(t.header_hash));
            }
            Ok(())
        }
    }
}

fn cmd_analyze(c: AnalyzeCommand) -> Result<()> {
    let usage = |e: lsnode::analysis::AnalysisError| anyhow::Error::from(Usage(e.to_string()));
    match c {
        AnalyzeCommand::Coded { k, p, threshold, n } => {
            let f = Distribution::geometric(p).map_err(usage)?;
            if k == 0 {
                bail!(Usage("--k must be positive".into()));
            }
            let model = Model::Coded { f: f.clone(), k };
            let min = min_nodes_for_threshold(&model, threshold).map_err(usage)?;
            println!("min_nodes {min}");
            println!("irrecoverability_at_min {:.6e}", irrecoverability_coded(&f, min, k));
            if let Some(n) = n.filter(|&n| n > 0) {
                println!("irrecoverability_at_n {n} {:.6e}", irrecoverability_coded(&f, n, k));
            }
        }
        AnalyzeCommand::Replicated { c, threshold, n } => {
            if c.is_nan() || c <= 1.0 {
                bail!(Usage("--c must exceed 1".into()));
            }
            let min = min_nodes_for_threshold(&Model::Replicated { c }, threshold).map_err(usage)?;
            println!("min_nodes {min}");
            println!("irrecoverability_at_min {:.6e}", irrecoverability_replicated(c, min));
            if let Some(n) = n {
                println!("irrecoverability_at_n {n} {:.6e}", irrecoverability_replicated(c, n));
            }
        }
        AnalyzeCommand::Curves { k, p, c, n_max, out } => {
            let f = Distribution::geometric(p).map_err(usage)?;
            if k == 0 || c.is_nan() || c <= 1.0 {
                bail!(Usage("need k > 0 and c > 1".into()));
            }
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            write_curve(&mut w, &format!("geometric pmf p={p}"), &curve(&CurveSpec::Pmf(f.clone()), 1..=25))?;
            writeln!(w)?;
            writeln!(w)?;
            let coded = CurveSpec::Irrecoverability(Model::Coded { f, k });
            write_curve(&mut w, &format!("coded irrecoverability k={k} p={p}"), &curve(&coded, 1..=n_max))?;
            writeln!(w)?;
            writeln!(w)?;
            let rep = CurveSpec::Irrecoverability(Model::Replicated { c });
            write_curve(&mut w, &format!("replicated irrecoverability c={c}"), &curve(&rep, 1..=n_max))?;
            w.flush()?;
            println!("wrote {}", out.display());
        }
        AnalyzeCommand::Netload { full, light, rate_mbps, ls_nodes, connections } => {
            let l = network_load(full, light, rate_mbps * 1e6, ls_nodes, connections).map_err(usage)?;
            println!("full_node_mbps {}", l.full_node_bps / 1e6);
            println!("per_connection_mbps {}", l.per_connection_bps / 1e6);
            println!("total_connections {}", l.total_connections);
            println!("ls_node_mbps {}", l.ls_node_bps / 1e6);
        }
    }
    Ok(())
}

fn cmd_sim(c: SimCommand) -> Result<()> {
    let (scenario, a) = match c {
        SimCommand::Availability(a) => (Scenario::Availability, a),
        SimCommand::Recovery(a) => (Scenario::Recovery, a),
        SimCommand::Tamper(a) => (Scenario::Tamper, a),
    };
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut config: SimConfig = text.parse()?;
    config.scenario = scenario;
    if let Some(t) = a.trials {
        config.trials = t;
    }
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    let metrics = simnet::run(&config)?;
    match &a.out {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
            metrics.write_table(&mut w)?;
            w.flush()?;
        }
        None => metrics.write_table(&mut io::stdout().lock())?,
    }
    eprintln!("{}", metrics.summary());
    Ok(())
}

fn cmd_chain(c: ChainCommand) -> Result<()> {
    match c {
        ChainCommand::Build { len, seed, min, max, out } => {
            if min > max {
                bail!(Usage("--min exceeds --max".into()));
            }
            let chain = build_chain(seed, len, min, max);
            let mut w = BufWriter::new(fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            write_chain(&chain, &mut w)?;
            w.flush()?;
            if let Some(tip) = chain.last() {
                println!("{} blocks, tip {}", chain.len(), hex::encode(tip.hash()));
            }
            Ok(())
        }
        ChainCommand::Validate { chain } => {
            let input = fs::File::open(&chain).with_context(|| format!("opening {}", chain.display()))?;
            let mut prev: Option<BlockHeader> = None;
            let mut count = 0u64;
            for block in ChainReader::new(BufReader::new(input)) {
                let block = block.with_context(|| format!("reading block {count}"))?;
                validate_next(prev.as_ref(), &block).map_err(|f: ChainFault| anyhow::Error::from(f))?;
                prev = Some(block.header);
                count += 1;
            }
            match prev {
                Some(tip) => println!("valid chain of {count} blocks, tip {}", hex::encode(tip.hash())),
                None => println!("empty chain"),
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn age_steps() {
        assert_eq!(parse_age_steps("0:8, 100:4").unwrap(), vec![(0, 8), (100, 4)]);
        assert!(parse_age_steps("0-8").is_err());
    }

    #[test]
    fn digests() {
        let d = parse_digest(&"ab".repeat(32)).unwrap();
        assert_eq!(d, [0xAB; 32]);
        assert!(parse_digest("abcd").is_err());
        assert!(parse_digest("zz").is_err());
    }
}
