//! Scale-sweep measurement of traversal latency and deterministic work,
//! the O(M) full-scan comparator, and invariance verdicts.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{traverse, traverse_read_only, OperatorParams};
use crate::graph::{generate_synthetic, GraphConfig, NodeId, SemanticGraph};
use crate::persist::measure_density;
use crate::quant::{dequantize, PrecisionRegime};

/// Configuration of a scale sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Node counts, strictly increasing.
    pub scales: Vec<u64>,
    pub traversals_per_scale: u64,
    /// Traversals excluded from measurement at the start of each scale.
    pub warmup_traversals: u64,
    pub seed: u64,
    pub params: OperatorParams,
    /// Disable last_touched writes during timed traversals.
    pub read_only: bool,
    /// Base graph shape; the per-scale seed is derived from `seed`.
    pub graph: GraphConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            scales: vec![10_000, 100_000, 1_000_000],
            traversals_per_scale: 1000,
            warmup_traversals: 100,
            seed: 7,
            params: OperatorParams::default(),
            read_only: true,
            graph: GraphConfig {
                precision: PrecisionRegime::F32,
                ..GraphConfig::default()
            },
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.len() < 2 {
            return Err(Error::TooFewScales(self.scales.len()));
        }
        if !self.scales.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("scales must be strictly increasing".into()));
        }
        if self.traversals_per_scale < 100 {
            return Err(Error::InvalidConfig(
                "need >= 100 traversals per scale for percentile validity".into(),
            ));
        }
        self.params.validate()?;
        self.graph.validate()
    }
}

/// Measurements for one node-count regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSample {
    pub n: u64,
    pub latency_mean_us: f64,
    pub latency_p50_us: f64,
    pub latency_p95_us: f64,
    pub work_mean: f64,
    pub work_max: u64,
    pub bytes_per_node: f64,
}

/// Ratio-based verdict over a sweep. Work invariance is the hard gate;
/// wall-clock latency is hardware-dependent and only a soft check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceVerdict {
    pub work_ratio: f64,
    pub latency_ratio: f64,
    /// Least-squares slope of work_mean vs log10(n).
    pub slope_work: f64,
    pub pass: bool,
    /// Soft check: latency_ratio within threshold. Reported, never gating.
    pub latency_within_threshold: bool,
}

pub const WORK_RATIO_THRESHOLD: f64 = 1.05;
pub const LATENCY_RATIO_THRESHOLD: f64 = 1.5;

/// Closed-form traversal work bound: sum_{j<=k} b^j * (1 + D_max),
/// independent of node count.
pub fn work_bound(params: &OperatorParams, d_max: u16) -> u64 {
    let mut levels: u64 = 0;
    let mut pow: u64 = 1;
    for _ in 0..=params.k {
        levels += pow;
        pow = pow.saturating_mul(params.beam as u64);
    }
    levels * (1 + d_max as u64)
}

fn derived_seed(seed: u64, scale_index: u64) -> u64 {
    // splitmix-style mix so scales get decorrelated generator streams
    let mut z = seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(scale_index + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn index_below(bits: u64, n: u64) -> u64 {
    ((bits as u128 * n as u128) >> 64) as u64
}

fn available_memory_bytes() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("MemAvailable:") {
            let kb: u64 = rest.trim().trim_end_matches(" kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

fn estimated_graph_bytes(config: &GraphConfig, n: u64) -> u64 {
    let per_node = config.d as u64 * config.precision.bytes_per_component() as u64
        + 24 * config.target_mean_degree.ceil() as u64
        + 256;
    n.saturating_mul(per_node)
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn sample_scale(
    graph: &mut SemanticGraph,
    n: u64,
    config: &SweepConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ScaleSample> {
    let density = measure_density(graph);
    let total = config.warmup_traversals + config.traversals_per_scale;
    let mut latencies: Vec<f64> = Vec::with_capacity(config.traversals_per_scale as usize);
    let mut works: Vec<u64> = Vec::with_capacity(config.traversals_per_scale as usize);
    // Fixed tick: keeps edge scoring state-independent across the sweep, so
    // read-only and mutating runs see identical work counters.
    let tick = 0;
    for i in 0..total {
        let start = NodeId(index_below(rng.next_u64(), n));
        let result = if config.read_only {
            traverse_read_only(&*graph, start, tick, &config.params)?
        } else {
            traverse(graph, start, tick, &config.params)?
        };
        if i >= config.warmup_traversals {
            latencies.push(result.elapsed.as_secs_f64() * 1e6);
            works.push(result.work);
        }
    }
    latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let count = latencies.len() as f64;
    Ok(ScaleSample {
        n,
        latency_mean_us: latencies.iter().sum::<f64>() / count,
        latency_p50_us: percentile(&latencies, 50.0),
        latency_p95_us: percentile(&latencies, 95.0),
        work_mean: works.iter().sum::<u64>() as f64 / count,
        work_max: works.iter().copied().max().unwrap_or(0),
        bytes_per_node: density.per_node_mean,
    })
}

/// Run the sweep: per scale, generate a synthetic graph with a derived
/// seed, run warmup traversals (excluded), then timed traversals from
/// seeded random start nodes.
pub fn run_scale_sweep(config: &SweepConfig) -> Result<Vec<ScaleSample>> {
    config.validate()?;
    let mut samples = Vec::with_capacity(config.scales.len());
    for (index, &n) in config.scales.iter().enumerate() {
        let needed = estimated_graph_bytes(&config.graph, n);
        if let Some(available) = available_memory_bytes() {
            if needed > available {
                return Err(Error::InsufficientMemory {
                    scale: n,
                    needed,
                    available,
                });
            }
        }
        let graph_config = GraphConfig {
            seed: derived_seed(config.seed, index as u64),
            ..config.graph
        };
        let mut graph = generate_synthetic(graph_config, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(config.seed, 0x5000 + index as u64));
        samples.push(sample_scale(&mut graph, n, config, &mut rng)?);
    }
    Ok(samples)
}

/// Exact nearest neighbor by Euclidean distance over dequantized
/// embeddings: the O(M) comparator. Work equals the node count.
pub fn baseline_global_scan(graph: &SemanticGraph, query: &[f64]) -> Result<(NodeId, u64)> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if query.len() != graph.dim() {
        return Err(Error::DimensionMismatch {
            expected: graph.dim(),
            got: query.len(),
        });
    }
    let mut best = NodeId(0);
    let mut best_dist = f64::INFINITY;
    let mut work: u64 = 0;
    for record in graph.nodes() {
        work += 1;
        let v = dequantize(&record.embedding)?;
        let dist: f64 = v.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        // ties broken by ascending id: strict improvement keeps the first
        if dist < best_dist {
            best_dist = dist;
            best = record.id;
        }
    }
    Ok((best, work))
}

/// Compute ratio and slope statistics over a sweep.
pub fn invariance_check(samples: &[ScaleSample]) -> Result<InvarianceVerdict> {
    if samples.len() < 2 {
        return Err(Error::TooFewScales(samples.len()));
    }
    let work_min = samples.iter().map(|s| s.work_mean).fold(f64::INFINITY, f64::min);
    let work_max = samples.iter().map(|s| s.work_mean).fold(0.0, f64::max);
    let lat_min = samples
        .iter()
        .map(|s| s.latency_mean_us)
        .fold(f64::INFINITY, f64::min);
    let lat_max = samples.iter().map(|s| s.latency_mean_us).fold(0.0, f64::max);
    let work_ratio = if work_min > 0.0 { work_max / work_min } else { f64::INFINITY };
    let latency_ratio = if lat_min > 0.0 { lat_max / lat_min } else { f64::INFINITY };

    // least-squares slope of work_mean against log10(n)
    let xs: Vec<f64> = samples.iter().map(|s| (s.n as f64).log10()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.work_mean).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope_work = if var > 0.0 { cov / var } else { 0.0 };

    Ok(InvarianceVerdict {
        work_ratio,
        latency_ratio,
        slope_work,
        pass: work_ratio <= WORK_RATIO_THRESHOLD,
        latency_within_threshold: latency_ratio <= LATENCY_RATIO_THRESHOLD,
    })
}

/// Sweep over baseline_global_scan instead of bounded traversal; its work
/// column grows linearly with n, so the verdict must fail.
pub fn run_baseline_sweep(config: &SweepConfig) -> Result<Vec<ScaleSample>> {
    config.validate()?;
    let mut samples = Vec::with_capacity(config.scales.len());
    for (index, &n) in config.scales.iter().enumerate() {
        let graph_config = GraphConfig {
            seed: derived_seed(config.seed, index as u64),
            ..config.graph
        };
        let graph = generate_synthetic(graph_config, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(config.seed, 0x6000 + index as u64));
        let density = measure_density(&graph);
        let d = graph.dim();
        let mut latencies = Vec::new();
        let mut works = Vec::new();
        // full scans are expensive; keep query counts modest
        let queries = (config.traversals_per_scale / 10).clamp(10, 200);
        let mut query = vec![0.0f64; d];
        for _ in 0..queries {
            for slot in query.iter_mut() {
                *slot = ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
            }
            let began = Instant::now();
            let (_, work) = baseline_global_scan(&graph, &query)?;
            latencies.push(began.elapsed().as_secs_f64() * 1e6);
            works.push(work);
        }
        latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let count = latencies.len() as f64;
        samples.push(ScaleSample {
            n,
            latency_mean_us: latencies.iter().sum::<f64>() / count,
            latency_p50_us: percentile(&latencies, 50.0),
            latency_p95_us: percentile(&latencies, 95.0),
            work_mean: works.iter().sum::<u64>() as f64 / count,
            work_max: works.iter().copied().max().unwrap_or(0),
            bytes_per_node: density.per_node_mean,
        });
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Write samples (and, for JSON, the verdict) to a report file with a
/// stable column order.
pub fn export_report(
    samples: &[ScaleSample],
    verdict: &InvarianceVerdict,
    format: ReportFormat,
    path: &Path,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("no samples to export".into()));
    }
    match format {
        ReportFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)?;
            for sample in samples {
                writer.serialize(sample)?;
            }
            writer.flush()?;
        }
        ReportFormat::Json => {
            let mut file = std::fs::File::create(path)?;
            let doc = serde_json::json!({
                "samples": samples,
                "verdict": verdict,
            });
            writeln!(file, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    Ok(())
}

/// Read samples back from a CSV report.
pub fn import_csv_report(path: &Path) -> Result<Vec<ScaleSample>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let sample: ScaleSample = row?;
        out.push(sample);
    }
    Ok(out)
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(std::io::Error::other(e))
    }
}
