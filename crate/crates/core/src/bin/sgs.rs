//! Command-line front end: graph generation, benchmarking, density audits,
//! capacity projection, and the two-regime work comparison.
//!
//! Exit codes: 0 success/pass, 1 usage error, 2 invariance failure,
//! 3 io/corruption.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use sgs::bench::{
    baseline_global_scan, export_report, invariance_check, run_baseline_sweep, run_scale_sweep,
    work_bound, ReportFormat, SweepConfig,
};
use sgs::quant::quantization_envelope_report;
use sgs::{
    density_report_from_file, read_snapshot, traverse_read_only, write_snapshot, Error,
    GraphConfig, NodeId, OperatorParams, PrecisionRegime, TIB_BYTES,
};

#[derive(Parser)]
#[command(name = "sgs", version, about = "Deterministic semantic-graph substrate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic snapshot and print its density report
    Gen(GenArgs),
    /// Run a scale sweep and check work/latency invariance
    Bench(BenchArgs),
    /// Print the density decomposition of a snapshot
    Density(DensityArgs),
    /// Project node capacity for a memory envelope
    Capacity(CapacityArgs),
    /// Compare bounded traversal work against the full-scan baseline
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 128)]
    d: u16,
    #[arg(long, default_value = "f64")]
    precision: String,
    #[arg(long, default_value_t = 9.96)]
    mean_degree: f64,
    #[arg(long, default_value_t = 64)]
    d_max: u16,
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated node counts; scientific notation accepted (1e4,1e5,1e6)
    #[arg(long, default_value = "1e4,1e5,1e6")]
    scales: String,
    #[arg(long, default_value_t = 1000)]
    traversals: u64,
    #[arg(long, default_value_t = 100)]
    warmup: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "f32")]
    precision: String,
    #[arg(long, default_value_t = 128)]
    d: u16,
    #[arg(long, default_value_t = 9.96)]
    mean_degree: f64,
    /// Time the O(M) full-scan baseline instead of bounded traversal
    #[arg(long)]
    baseline: bool,
    /// Keep last_touched writes enabled during timed traversals
    #[arg(long)]
    mutating: bool,
    /// Report file; .json for JSON, otherwise CSV
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    path: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CapacityArgs {
    /// Memory envelope, e.g. "1TiB", "512GiB", or plain bytes
    #[arg(long)]
    envelope: String,
    #[arg(long)]
    node_size: Option<f64>,
    /// Take node size (and d) from a snapshot's density report
    #[arg(long)]
    from_snapshot: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    d: u16,
}

#[derive(Args)]
struct CompareArgs {
    snapshot: PathBuf,
    #[arg(long, default_value_t = 100)]
    queries: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Linkage/metadata masses measured on this artifact's default F32 build
/// (n=1000, d=128, mean degree target 9.96, empty metadata).
const DEFAULT_LINKAGE_BYTES: f64 = 159.36;
const DEFAULT_METADATA_BYTES: f64 = 22.024;

fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let lower = s.to_ascii_lowercase();
    let (digits, mult) = if let Some(v) = lower.strip_suffix("tib") {
        (v, 1u64 << 40)
    } else if let Some(v) = lower.strip_suffix("gib") {
        (v, 1u64 << 30)
    } else if let Some(v) = lower.strip_suffix("mib") {
        (v, 1u64 << 20)
    } else if let Some(v) = lower.strip_suffix("kib") {
        (v, 1u64 << 10)
    } else if let Some(v) = lower.strip_suffix('b') {
        (v, 1)
    } else {
        (lower.as_str(), 1)
    };
    let digits = digits.trim();
    let value: f64 = digits.parse().map_err(|_| format!("bad size '{s}'"))?;
    if value < 0.0 {
        return Err(format!("negative size '{s}'"));
    }
    Ok((value * mult as f64).round() as u64)
}

fn parse_scales(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .map(|v| v.round() as u64)
                .map_err(|_| format!("bad scale '{tok}'"))
        })
        .collect()
}

fn parse_precision(s: &str) -> Result<PrecisionRegime, String> {
    PrecisionRegime::parse(s).ok_or_else(|| format!("unknown precision '{s}'"))
}

fn error_exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_)
        | Error::DimensionMismatch { .. }
        | Error::TooFewScales(_)
        | Error::ZeroNodeSize => 1,
        _ => 3,
    }
}

fn cmd_gen(args: GenArgs) -> Result<u8, Error> {
    let precision =
        parse_precision(&args.precision).map_err(Error::InvalidConfig)?;
    if args.n == 0 {
        return Err(Error::InvalidConfig("--n must be >= 1".into()));
    }
    let config = GraphConfig {
        d: args.d,
        precision,
        target_mean_degree: args.mean_degree,
        d_max: args.d_max,
        k: args.k,
        seed: args.seed,
    };
    println!(
        "config: gen n={} d={} precision={} mean_degree={} d_max={} k={} seed={} out={}",
        args.n,
        args.d,
        precision.name(),
        args.mean_degree,
        args.d_max,
        args.k,
        args.seed,
        args.out.display()
    );
    let graph = sgs::generate_synthetic(config, args.n)?;
    let report = write_snapshot(&graph, &args.out)?;
    print!("{}", report.to_text());
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<u8, Error> {
    let scales = parse_scales(&args.scales).map_err(Error::InvalidConfig)?;
    let precision =
        parse_precision(&args.precision).map_err(Error::InvalidConfig)?;
    let config = SweepConfig {
        scales,
        traversals_per_scale: args.traversals,
        warmup_traversals: args.warmup,
        seed: args.seed,
        params: OperatorParams::default(),
        read_only: !args.mutating,
        graph: GraphConfig {
            d: args.d,
            precision,
            target_mean_degree: args.mean_degree,
            ..GraphConfig::default()
        },
    };
    println!(
        "config: bench scales={:?} traversals={} warmup={} seed={} precision={} d={} mean_degree={} baseline={} read_only={}",
        config.scales,
        config.traversals_per_scale,
        config.warmup_traversals,
        config.seed,
        precision.name(),
        args.d,
        args.mean_degree,
        args.baseline,
        config.read_only,
    );
    let samples = if args.baseline {
        run_baseline_sweep(&config)?
    } else {
        run_scale_sweep(&config)?
    };
    let verdict = invariance_check(&samples)?;
    let bound = work_bound(&config.params, config.graph.d_max);
    println!("n,latency_mean_us,latency_p50_us,latency_p95_us,work_mean,work_max,bytes_per_node");
    for s in &samples {
        println!(
            "{},{:.3},{:.3},{:.3},{:.3},{},{:.3}",
            s.n, s.latency_mean_us, s.latency_p50_us, s.latency_p95_us, s.work_mean, s.work_max,
            s.bytes_per_node
        );
    }
    println!(
        "verdict: work_ratio={:.4} latency_ratio={:.4} slope_work={:.4} work_bound={} pass={}",
        verdict.work_ratio, verdict.latency_ratio, verdict.slope_work, bound, verdict.pass
    );
    if !verdict.latency_within_threshold {
        println!(
            "warning: latency_ratio {:.3} above soft threshold (wall-clock is hardware-dependent; not gating)",
            verdict.latency_ratio
        );
    }
    if let Some(out) = &args.out {
        let format = if out.extension().is_some_and(|e| e == "json") {
            ReportFormat::Json
        } else {
            ReportFormat::Csv
        };
        export_report(&samples, &verdict, format, out)?;
        println!("report written to {}", out.display());
    }
    Ok(if verdict.pass { 0 } else { 2 })
}

fn cmd_density(args: DensityArgs) -> Result<u8, Error> {
    println!("config: density path={} json={}", args.path.display(), args.json);
    let report = density_report_from_file(&args.path)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    } else {
        print!("{}", report.to_text());
        if report.degenerate {
            println!("notice: empty snapshot, per-node figures undefined");
        }
    }
    Ok(0)
}

fn cmd_capacity(args: CapacityArgs) -> Result<u8, Error> {
    let envelope = parse_size(&args.envelope).map_err(Error::InvalidConfig)?;
    let (node_size, d, linkage, metadata) = match (&args.node_size, &args.from_snapshot) {
        (Some(ns), None) => (*ns, args.d as u64, DEFAULT_LINKAGE_BYTES, DEFAULT_METADATA_BYTES),
        (None, Some(path)) => {
            let report = density_report_from_file(path)?;
            if report.degenerate {
                return Err(Error::ZeroNodeSize);
            }
            // d comes from the snapshot header, not the density report
            let graph = read_snapshot(path)?;
            (
                report.per_node_mean,
                graph.dim() as u64,
                report.linkage_bytes_per_node,
                report.metadata_bytes_per_node,
            )
        }
        _ => {
            return Err(Error::InvalidConfig(
                "provide exactly one of --node-size or --from-snapshot".into(),
            ))
        }
    };
    println!(
        "config: capacity envelope={envelope} node_size={node_size} d={d}"
    );
    let nodes = sgs::capacity_projection(envelope, node_size)?;
    println!("nodes_max {nodes}");
    println!("nodes_max_billions {:.3}", nodes as f64 / 1e9);
    println!("envelope_table (1 TiB = {TIB_BYTES} bytes):");
    println!("regime,bytes_per_component,embedding_mass,node_size,nodes_per_tib");
    for row in quantization_envelope_report(d, linkage, metadata) {
        println!(
            "{},{},{},{:.1},{}",
            row.regime.name(),
            row.bytes_per_component,
            row.embedding_mass_bytes,
            row.node_size_bytes,
            row.nodes_per_tib
        );
    }
    Ok(0)
}

fn cmd_compare(args: CompareArgs) -> Result<u8, Error> {
    println!(
        "config: compare snapshot={} queries={} seed={}",
        args.snapshot.display(),
        args.queries,
        args.seed
    );
    let graph = read_snapshot(&args.snapshot)?;
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let params = OperatorParams::default();
    let n = graph.len() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut traversal_work: u64 = 0;
    let mut scan_work: u64 = 0;
    let mut query = vec![0.0f64; graph.dim()];
    for _ in 0..args.queries {
        let start = NodeId(((rng.next_u64() as u128 * n as u128) >> 64) as u64);
        let r = traverse_read_only(&graph, start, 0, &params)?;
        traversal_work += r.work;
        for slot in query.iter_mut() {
            *slot = ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
        }
        let (_, w) = baseline_global_scan(&graph, &query)?;
        scan_work += w;
    }
    let queries = args.queries.max(1) as f64;
    let traversal_mean = traversal_work as f64 / queries;
    let scan_mean = scan_work as f64 / queries;
    println!("regime,mean_work");
    println!("traversal,{traversal_mean:.3}");
    println!("baseline_scan,{scan_mean:.3}");
    println!("work_bound {}", work_bound(&params, graph.config().d_max));
    println!("ratio {:.3}", scan_mean / traversal_mean);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // keep clap's help/version on stdout with success, usage errors at 1
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Density(args) => cmd_density(args),
        Command::Capacity(args) => cmd_capacity(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(error_exit_code(&err))
        }
    }
}
