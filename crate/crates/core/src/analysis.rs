//! Availability models for coded and replicated storage, plus the network-load
//! arithmetic used to compare serving strategies.

use std::io::{self, Write};

use thiserror::Error;

/// Sum-to-one tolerance for explicit distributions.
pub const PMF_TOLERANCE: f64 = 1e-12;

/// Smallest value written to curve files; smaller values are clamped and flagged.
pub const CURVE_FLOOR: f64 = 1e-30;

/// Upper bound on `n` for threshold scans.
pub const MAX_SCAN_NODES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("irrecoverability increased at n = {n}")]
    NotMonotone { n: usize },
    #[error("threshold not reached for n up to {limit}")]
    NotReached { limit: usize },
}

/// Law of the number of fragments a node stores.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// `f(r) = p (1-p)^(r-1)` for `r >= 1`.
    Geometric { p: f64 },
    /// `pmf[r]` for `r = 0, 1, ...`; zero beyond the end.
    Explicit { pmf: Vec<f64> },
}

impl Distribution {
    pub fn geometric(p: f64) -> Result<Self, AnalysisError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(AnalysisError::InvalidParameter(format!("geometric p = {p} outside (0, 1)")));
        }
        Ok(Distribution::Geometric { p })
    }

    pub fn explicit(pmf: Vec<f64>) -> Result<Self, AnalysisError> {
        if pmf.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(AnalysisError::InvalidDistribution("negative or non-finite mass".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(AnalysisError::InvalidDistribution(format!("masses sum to {total}")));
        }
        Ok(Distribution::Explicit { pmf })
    }

    /// Every node stores exactly `r` fragments.
    pub fn constant(r: usize) -> Self {
        let mut pmf = vec![0.0; r + 1];
        pmf[r] = 1.0;
        Distribution::Explicit { pmf }
    }

    pub fn pmf(&self, r: usize) -> f64 {
        match self {
            Distribution::Geometric { p } => {
                if r == 0 {
                    0.0
                } else {
                    p * (1.0 - p).powi((r - 1) as i32)
                }
            }
            Distribution::Explicit { pmf } => pmf.get(r).copied().unwrap_or(0.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Geometric { p } => 1.0 / p,
            Distribution::Explicit { pmf } => pmf.iter().enumerate().map(|(r, m)| r as f64 * m).sum(),
        }
    }

    fn truncated(&self, len: usize) -> Vec<f64> {
        (0..len).map(|r| self.pmf(r)).collect()
    }
}

/// `acc <- acc * f`, keeping support `0..acc.len()`.
fn convolve_truncated(acc: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; acc.len()];
    for (i, &a) in acc.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in f.iter().take(acc.len() - i).enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Probability that `n` independent nodes drawing fragment counts from `f` hold fewer
/// than `k` fragments in total: the sum over `u < k` of the `n`-fold convolution of `f`.
pub fn irrecoverability_coded(f: &Distribution, n: usize, k: usize) -> f64 {
    assert!(n >= 1 && k >= 1, "need n >= 1 and k >= 1");
    let fk = f.truncated(k);
    let mut acc = fk.clone();
    for _ in 1..n {
        acc = convolve_truncated(&acc, &fk);
    }
    acc.iter().sum::<f64>().clamp(0.0, 1.0)
}

/// Negative-binomial mass: the probability that `n` geometric(p) counts sum to `u`,
/// `C(u-1, n-1) p^n (1-p)^(u-n)`, evaluated in log space.
pub fn geometric_convolution(p: f64, n: usize, u: usize) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p must lie in (0, 1)");
    if n == 0 {
        return if u == 0 { 1.0 } else { 0.0 };
    }
    if u < n {
        return 0.0;
    }
    // ln C(u-1, n-1) = sum_{i=1}^{n-1} ln((u-n+i)/i)
    let m = n - 1;
    let free = u - n;
    let ln_binom: f64 = (1..=m.min(free)).map(|i| ((free.max(m) + i) as f64 / i as f64).ln()).sum();
    (ln_binom + n as f64 * p.ln() + free as f64 * (-p).ln_1p()).exp()
}

/// [`irrecoverability_coded`] for a geometric law through the closed form.
pub fn irrecoverability_geometric(p: f64, n: usize, k: usize) -> f64 {
    (n..k).map(|u| geometric_convolution(p, n, u)).sum::<f64>().clamp(0.0, 1.0)
}

/// Probability that none of `n` nodes replicating a random `1/c` share holds a given block.
pub fn irrecoverability_replicated(c: f64, n: usize) -> f64 {
    assert!(c > 1.0, "compression factor must exceed 1");
    (1.0 - 1.0 / c).powi(n as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Coded { f: Distribution, k: usize },
    Replicated { c: f64 },
}

impl Model {
    pub fn irrecoverability(&self, n: usize) -> f64 {
        match self {
            Model::Coded { f, k } => irrecoverability_coded(f, n, *k),
            Model::Replicated { c } => irrecoverability_replicated(*c, n),
        }
    }

    /// Values for `n = 1..=n_max`, sharing one running convolution for the coded model.
    pub fn series(&self, n_max: usize) -> Vec<f64> {
        match self {
            Model::Coded { f, k } => {
                let fk = f.truncated(*k);
                let mut acc = fk.clone();
                let mut out = Vec::with_capacity(n_max);
                for n in 1..=n_max {
                    if n > 1 {
                        acc = convolve_truncated(&acc, &fk);
                    }
                    out.push(acc.iter().sum::<f64>().clamp(0.0, 1.0));
                }
                out
            }
            Model::Replicated { c } => (1..=n_max).map(|n| irrecoverability_replicated(*c, n)).collect(),
        }
    }
}

/// Smallest `n` whose irrecoverability falls strictly below `threshold`.
pub fn min_nodes_for_threshold(model: &Model, threshold: f64) -> Result<usize, AnalysisError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(AnalysisError::InvalidParameter(format!("threshold {threshold} outside (0, 1)")));
    }
    match model {
        Model::Replicated { c } if *c <= 1.0 => {
            return Err(AnalysisError::InvalidParameter(format!("compression factor {c} must exceed 1")))
        }
        Model::Coded { k: 0, .. } => return Err(AnalysisError::InvalidParameter("k must be positive".into())),
        // a law that never stores anything never improves
        Model::Coded { f, .. } if f.pmf(0) >= 1.0 => return Err(AnalysisError::NotReached { limit: 1 }),
        _ => {}
    }
    let mut prev = f64::INFINITY;
    let mut running: Option<(Vec<f64>, Vec<f64>)> = None;
    for n in 1..=MAX_SCAN_NODES {
        let value = match model {
            Model::Replicated { c } => irrecoverability_replicated(*c, n),
            Model::Coded { f, k } => {
                let (fk, acc) = running.get_or_insert_with(|| {
                    let fk = f.truncated(*k);
                    (fk.clone(), fk)
                });
                if n > 1 {
                    *acc = convolve_truncated(acc, fk);
                }
                acc.iter().sum::<f64>().clamp(0.0, 1.0)
            }
        };
        if value > prev {
            return Err(AnalysisError::NotMonotone { n });
        }
        if value < threshold {
            return Ok(n);
        }
        prev = value;
    }
    Err(AnalysisError::NotReached { limit: MAX_SCAN_NODES })
}

/// Per-node egress in two serving strategies, in bits per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkLoad {
    /// Each full node serving every light node's full download rate.
    pub full_node_bps: f64,
    /// Rate of one of a light node's parallel connections.
    pub per_connection_bps: f64,
    pub total_connections: u64,
    /// Each low-storage node's share of all connections.
    pub ls_node_bps: f64,
}

/// Load when `light_nodes` clients, each downloading at `per_node_bps`, are served by
/// `full_nodes` full nodes, versus by `ls_nodes` low-storage nodes with each client
/// spreading its rate over `connections_per_recovery` peers.
pub fn network_load(
    full_nodes: u64,
    light_nodes: u64,
    per_node_bps: f64,
    ls_nodes: u64,
    connections_per_recovery: u64,
) -> Result<NetworkLoad, AnalysisError> {
    if full_nodes == 0 || ls_nodes == 0 || connections_per_recovery == 0 {
        return Err(AnalysisError::InvalidParameter("server and connection counts must be positive".into()));
    }
    if !(per_node_bps.is_finite() && per_node_bps >= 0.0) {
        return Err(AnalysisError::InvalidParameter(format!("rate {per_node_bps}")));
    }
    let per_connection_bps = per_node_bps / connections_per_recovery as f64;
    let total_connections = light_nodes * connections_per_recovery;
    Ok(NetworkLoad {
        full_node_bps: per_node_bps * light_nodes as f64 / full_nodes as f64,
        per_connection_bps,
        total_connections,
        ls_node_bps: per_connection_bps * total_connections as f64 / ls_nodes as f64,
    })
}

/// What a curve plots.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSpec {
    /// The fragment-count law itself, `x = r`.
    Pmf(Distribution),
    /// Irrecoverability against `x = n`.
    Irrecoverability(Model),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: usize,
    pub value: f64,
    /// The exact value was below [`CURVE_FLOOR`] and was raised to it.
    pub clamped: bool,
}

pub fn curve(spec: &CurveSpec, xs: std::ops::RangeInclusive<usize>) -> Vec<CurvePoint> {
    let (lo, hi) = (*xs.start(), *xs.end());
    let raw: Vec<(usize, f64)> = match spec {
        CurveSpec::Pmf(f) => (lo..=hi).map(|r| (r, f.pmf(r))).collect(),
        CurveSpec::Irrecoverability(m) => {
            if hi == 0 {
                Vec::new()
            } else {
                let series = m.series(hi);
                (lo.max(1)..=hi).map(|n| (n, series[n - 1])).collect()
            }
        }
    };
    raw.into_iter()
        .map(|(x, v)| CurvePoint { x, value: v.max(CURVE_FLOOR), clamped: v < CURVE_FLOOR })
        .collect()
}

/// Writes points as whitespace-separated `x value clamped` rows under a `#` header.
pub fn write_curve<W: Write>(out: &mut W, label: &str, points: &[CurvePoint]) -> io::Result<()> {
    writeln!(out, "# {label}")?;
    writeln!(out, "# x value clamped")?;
    for p in points {
        writeln!(out, "{} {:.10e} {}", p.x, p.value, u8::from(p.clamped))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Independent check: exact rational-free recursion for sums of geometrics,
    /// P(S_n = u) = sum_j P(S_{n-1} = u - j) p (1-p)^(j-1).
    fn brute_sum_below(p: f64, n: usize, k: usize) -> f64 {
        let mut dist = vec![1.0];
        for _ in 0..n {
            let mut next = vec![0.0; dist.len() + k];
            for (u, &m) in dist.iter().enumerate() {
                for j in 1..=k {
                    next[u + j] += m * p * (1.0 - p).powi(j as i32 - 1);
                }
            }
            next.truncate(k);
            dist = next;
        }
        dist.iter().sum()
    }

    #[test]
    fn trivial_examples() {
        let g = Distribution::geometric(0.2).unwrap();
        assert_eq!(irrecoverability_coded(&g, 1, 1), 0.0);
        assert!(close(irrecoverability_coded(&g, 1, 2), 0.2, 1e-15));
        assert!(close(geometric_convolution(0.2, 1, 1), 0.2, 1e-15));
        assert!(close(geometric_convolution(0.2, 2, 2), 0.04, 1e-15));
        assert!(close(geometric_convolution(0.2, 2, 3), 0.064, 1e-15));
        assert_eq!(geometric_convolution(0.2, 5, 4), 0.0);
        assert!(close(irrecoverability_replicated(20.0, 1), 0.95, 1e-15));
    }

    #[test]
    fn replicated_fifty() {
        let v = irrecoverability_replicated(20.0, 50);
        assert!(close(v, 0.0770, 1e-4));
        assert!(close(v, 0.95f64.powi(50), 1e-15));
    }

    #[test]
    fn coded_matches_brute_force() {
        for &(p, n, k) in &[(0.2, 10, 100), (0.2, 20, 100), (0.5, 7, 16), (0.05, 3, 40)] {
            let g = Distribution::geometric(p).unwrap();
            let a = irrecoverability_coded(&g, n, k);
            let b = brute_sum_below(p, n, k);
            assert!(close(a, b, 1e-12), "{p} {n} {k}: {a} vs {b}");
        }
    }

    #[test]
    fn reference_values() {
        // independent high-precision evaluation of the negative-binomial tail
        let g = Distribution::geometric(0.2).unwrap();
        let at = |n| irrecoverability_coded(&g, n, 100);
        assert!(close(at(10) / 0.997_33, 1.0, 1e-4));
        assert!(close(at(20) / 0.519_98, 1.0, 1e-4));
        assert!(close(at(30) / 0.009_692_1, 1.0, 1e-4));
        assert!(close(at(36) / 1.16e-4, 1.0, 1e-2));
        assert!(close(at(37) / 4.82e-5, 1.0, 1e-2));
        assert!(close(at(40) / 2.68e-6, 1.0, 1e-2));
    }

    #[test]
    fn thresholds() {
        let coded = Model::Coded { f: Distribution::geometric(0.2).unwrap(), k: 100 };
        let rep = Model::Replicated { c: 20.0 };
        assert_eq!(min_nodes_for_threshold(&rep, 5e-6).unwrap(), 238);
        assert_eq!(min_nodes_for_threshold(&rep, 0.95).unwrap(), 2);
        assert_eq!(min_nodes_for_threshold(&coded, 5e-5).unwrap(), 37);
        assert_eq!(min_nodes_for_threshold(&coded, 5e-6).unwrap(), 40);
        assert!(min_nodes_for_threshold(&rep, 0.0).is_err());
        assert!(min_nodes_for_threshold(&Model::Coded { f: Distribution::constant(0), k: 3 }, 0.5).is_err());
        let ones = Model::Coded { f: Distribution::constant(1), k: 100 };
        assert_eq!(min_nodes_for_threshold(&ones, 0.5).unwrap(), 100);
    }

    #[test]
    fn series_matches_pointwise() {
        let coded = Model::Coded { f: Distribution::geometric(0.2).unwrap(), k: 100 };
        let s = coded.series(45);
        for n in [1, 2, 17, 37, 45] {
            assert!(close(s[n - 1], coded.irrecoverability(n), 1e-15));
        }
    }

    #[test]
    fn coded_below_replicated_from_crossover() {
        let coded = Model::Coded { f: Distribution::geometric(0.2).unwrap(), k: 100 }.series(400);
        let rep = Model::Replicated { c: 20.0 }.series(400);
        // the curves cross between n = 22 and n = 23
        assert!(coded[21] > rep[21]);
        for n in 23..=400 {
            assert!(coded[n - 1] <= rep[n - 1], "n = {n}");
        }
        for n in 2..=400 {
            assert!(rep[n - 1] < rep[n - 2]);
        }
        // strict decrease until the coded value underflows
        for n in 2..=400 {
            if coded[n - 2] > 0.0 {
                assert!(coded[n - 1] < coded[n - 2], "n = {n}");
            }
        }
    }

    #[test]
    fn negative_binomial_sums_to_one() {
        for &(p, n) in &[(0.2, 1), (0.2, 10), (0.5, 30), (0.2, 50)] {
            // P(S_n > top) <= P(Binomial(top, p) < n), so a cap far past n/p leaves a tail below 1e-13
            let top = (10.0 * n as f64 / p) as usize + (150.0 / p) as usize;
            let total: f64 = (n..=top).map(|u| geometric_convolution(p, n, u)).sum();
            assert!(close(total, 1.0, 1e-12), "{p} {n}: {total}");
        }
    }

    #[test]
    fn large_arguments_stay_finite() {
        let v = geometric_convolution(0.2, 2000, 10_000);
        assert!(v.is_finite() && v > 0.0);
        assert_eq!(geometric_convolution(0.2, 9000, 9000), 0.2f64.powi(9000));
    }

    #[test]
    fn explicit_matches_closed_form() {
        let p = 0.2;
        let g = Distribution::geometric(p).unwrap();
        let mut pmf: Vec<f64> = (0..400).map(|r| g.pmf(r)).collect();
        let tail = 1.0 - pmf.iter().sum::<f64>();
        pmf[399] += tail;
        let e = Distribution::explicit(pmf).unwrap();
        for n in [1, 5, 10, 20, 30, 37] {
            let a = irrecoverability_coded(&e, n, 100);
            let b = irrecoverability_geometric(p, n, 100);
            assert!(close(a, b, 1e-10), "n = {n}: {a} vs {b}");
        }
    }

    #[test]
    fn explicit_validation() {
        assert!(Distribution::explicit(vec![0.5, 0.4]).is_err());
        assert!(Distribution::explicit(vec![0.5, -0.5, 1.0]).is_err());
        assert!(Distribution::explicit(vec![0.25, 0.75]).is_ok());
        assert!(Distribution::geometric(1.0).is_err());
        assert!(close(Distribution::geometric(0.2).unwrap().mean(), 5.0, 1e-12));
        assert_eq!(Distribution::constant(5).mean(), 5.0);
    }

    #[test]
    fn network_load_examples() {
        let l = network_load(5, 1000, 10e6, 100, 20).unwrap();
        assert_eq!(l.full_node_bps, 2e9);
        assert_eq!(l.per_connection_bps, 0.5e6);
        assert_eq!(l.total_connections, 20_000);
        assert_eq!(l.ls_node_bps, 100e6);
        let idle = network_load(5, 0, 10e6, 100, 20).unwrap();
        assert_eq!((idle.full_node_bps, idle.ls_node_bps), (0.0, 0.0));
        assert!(network_load(0, 10, 1.0, 1, 1).is_err());
    }

    #[test]
    fn curves() {
        let pmf = curve(&CurveSpec::Pmf(Distribution::geometric(0.2).unwrap()), 1..=25);
        assert_eq!(pmf.len(), 25);
        assert!(close(pmf[0].value, 0.2, 1e-15));
        assert!(pmf.windows(2).all(|w| w[1].value < w[0].value));

        let coded = curve(
            &CurveSpec::Irrecoverability(Model::Coded { f: Distribution::geometric(0.2).unwrap(), k: 100 }),
            1..=300,
        );
        let at10 = coded[9].value;
        assert!(at10 > 0.0 && at10 < 1.0);
        assert!(coded.iter().all(|p| p.value >= CURVE_FLOOR));
        assert!(coded.last().unwrap().clamped);
        assert!(!coded[9].clamped);

        let rep = curve(&CurveSpec::Irrecoverability(Model::Replicated { c: 20.0 }), 5..=60);
        for p in &rep {
            assert_eq!(p.value, irrecoverability_replicated(20.0, p.x));
        }

        let mut buf = Vec::new();
        write_curve(&mut buf, "replicated c=20", &rep[..2]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 2);
        let cols: Vec<&str> = rows[0].split_whitespace().collect();
        assert_eq!(cols[0], "5");
        assert!(close(cols[1].parse::<f64>().unwrap(), 0.95f64.powi(5), 1e-9));
        assert_eq!(cols[2], "0");
    }

    proptest::proptest! {
        #[test]
        fn coded_is_a_probability(p in 0.01f64..0.99, n in 1usize..30, k in 1usize..60) {
            let v = irrecoverability_coded(&Distribution::geometric(p).unwrap(), n, k);
            proptest::prop_assert!((0.0..=1.0).contains(&v));
            proptest::prop_assert!((v - irrecoverability_geometric(p, n, k)).abs() < 1e-10);
        }
    }
}
