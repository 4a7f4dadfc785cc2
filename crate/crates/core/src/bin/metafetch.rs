use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use metafetch_core::bench::{channel_burst, dependent_chain, pool_run, write_latency_csv, PoolBench};
use metafetch_core::config::{ExperimentConfig, CONFIG_ENV};
use metafetch_core::report::run_experiment;
use metafetch_core::trace::{compute_stats, generate, generate_pair, read_trace, write_tsv, GeneratorSpec};

#[derive(Parser)]
#[command(name = "metafetch", version, about = "Metadata fetch, cache and prefetch simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a trace through the configured continuum and report per layer.
    Replay(ReplayArgs),
    /// Sweep pipeline capacity on one channel and service counts in a pool.
    BenchPipeline(BenchArgs),
    /// Write a synthetic trace.
    Generate(GenerateArgs),
    /// Summarize a trace file.
    Stats(StatsArgs),
}

#[derive(Args)]
struct ReplayArgs {
    /// TOML experiment file.
    #[arg(long, short, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set edge.predictor=dls`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Trace file, shorthand for `--set trace.path=...`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary destination.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    requests: usize,
    #[arg(long, default_value_t = 40.0)]
    rtt_ms: f64,
    /// Pipeline capacities for the single-channel sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,5,25,100")]
    capacities: Vec<usize>,
    /// Service counts for the pool sweep.
    #[arg(long, value_delimiter = ',', default_value = "5,10,30")]
    services: Vec<usize>,
    /// Pipeline capacity of each pool service.
    #[arg(long, default_value_t = 5)]
    service_capacity: usize,
    /// Gap between request arrivals at the pool; 0 sends all at once.
    #[arg(long, default_value_t = 0.5)]
    arrival_interval_ms: f64,
    /// Commands in the dependent chain measured alongside the sweep.
    #[arg(long, default_value_t = 10)]
    chain: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Summary CSV destination; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-request pool latencies.
    #[arg(long)]
    latencies: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 100_000)]
    events: usize,
    #[arg(long, default_value_t = 0.6252)]
    unique: f64,
    #[arg(long, default_value_t = 0.9233)]
    once: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    segment_width: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    write_fraction: f64,
    #[arg(long, default_value_t = 3000)]
    scan_max: usize,
    /// Output trace (TSV).
    #[arg(long, short)]
    out: PathBuf,
    /// Also write a correlated second day here.
    #[arg(long)]
    day2: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    trace: PathBuf,
    /// Emit JSON instead of `metric,value` CSV.
    #[arg(long)]
    json: bool,
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn replay(a: ReplayArgs) -> Result<()> {
    let mut overrides = a.overrides;
    if let Some(t) = &a.trace {
        overrides.push(format!("trace.path={:?}", t.display().to_string()));
    }
    let cfg = ExperimentConfig::load(a.config.as_deref(), &overrides)?;
    if a.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let report = run_experiment(&cfg)?;
    let mut out = sink(&a.csv)?;
    report.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &a.json {
        std::fs::write(p, report.to_json()).with_context(|| format!("write {}", p.display()))?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.requests == 0 {
        bail!("--requests must be at least 1");
    }
    if a.chain == 0 {
        bail!("--chain must be at least 1");
    }
    let mut out = csv::Writer::from_writer(sink(&a.csv)?);
    out.write_record([
        "kind", "services", "capacity", "requests", "rtt_ms", "total_ms", "avg_ms", "p50_ms", "p95_ms", "p99_ms",
        "max_ms", "within_1_2_rtt",
    ])?;
    let mut channel_runs = Vec::new();
    for &c in &a.capacities {
        if c == 0 {
            bail!("pipeline capacity must be at least 1");
        }
        let r = channel_burst(c, a.rtt_ms, a.requests)?;
        let avg = r.latencies_ms.iter().sum::<f64>() / r.requests as f64;
        out.write_record([
            "channel".to_string(),
            "1".into(),
            c.to_string(),
            a.requests.to_string(),
            a.rtt_ms.to_string(),
            format!("{:.3}", r.total_ms),
            format!("{avg:.3}"),
            String::new(),
            String::new(),
            String::new(),
            format!("{:.3}", r.total_ms),
            String::new(),
        ])?;
        channel_runs.push(r);
    }
    let chain_ms = dependent_chain(a.rtt_ms, a.chain)?;
    out.write_record([
        "dependent_chain".to_string(),
        "1".into(),
        a.chain.to_string(),
        "1".into(),
        a.rtt_ms.to_string(),
        format!("{chain_ms:.3}"),
        format!("{chain_ms:.3}"),
        String::new(),
        String::new(),
        String::new(),
        format!("{chain_ms:.3}"),
        String::new(),
    ])?;
    let mut pool_runs = Vec::new();
    for &s in &a.services {
        if s == 0 {
            bail!("service count must be at least 1");
        }
        let b = PoolBench {
            requests: a.requests,
            rtt_ms: a.rtt_ms,
            services: s,
            capacity: a.service_capacity,
            arrival_interval_ms: a.arrival_interval_ms,
        };
        let r = pool_run(&b, a.seed);
        let m = &r.summary;
        out.write_record([
            "pool".to_string(),
            s.to_string(),
            a.service_capacity.to_string(),
            a.requests.to_string(),
            a.rtt_ms.to_string(),
            format!("{:.3}", r.total_ms),
            format!("{:.3}", m.avg_ms),
            format!("{:.3}", m.p50_ms),
            format!("{:.3}", m.p95_ms),
            format!("{:.3}", m.p99_ms),
            format!("{:.3}", m.max_ms),
            format!("{:.4}", r.fraction_within(a.rtt_ms, 2.0 * a.rtt_ms)),
        ])?;
        pool_runs.push(r);
    }
    out.flush()?;
    if let Some(p) = &a.latencies {
        write_latency_csv(File::create(p).with_context(|| format!("create {}", p.display()))?, &pool_runs)?;
    }
    if let Some(p) = &a.json {
        let doc = serde_json::json!({
            "seed": a.seed,
            "config": {
                "requests": a.requests,
                "rtt_ms": a.rtt_ms,
                "capacities": a.capacities,
                "services": a.services,
                "service_capacity": a.service_capacity,
                "arrival_interval_ms": a.arrival_interval_ms,
                "chain": a.chain,
            },
            "channel": channel_runs.iter().map(|r| serde_json::json!({"capacity": r.capacity, "total_ms": r.total_ms})).collect::<Vec<_>>(),
            "dependent_chain_ms": chain_ms,
            "pool": pool_runs.iter().map(|r| serde_json::json!({"services": r.bench.services, "summary": r.summary, "within_1_2_rtt": r.fraction_within(a.rtt_ms, 2.0 * a.rtt_ms)})).collect::<Vec<_>>(),
        });
        std::fs::write(p, serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(())
}

fn gen(a: GenerateArgs) -> Result<()> {
    let spec = GeneratorSpec {
        events: a.events,
        unique_fraction: a.unique,
        once_fraction: a.once,
        segment_width: a.segment_width,
        write_fraction: a.write_fraction,
        scan_max: a.scan_max,
        ..GeneratorSpec::default()
    };
    let write = |p: &PathBuf, ev: &[_]| -> Result<()> {
        let f = File::create(p).with_context(|| format!("create {}", p.display()))?;
        write_tsv(BufWriter::new(f), ev)?;
        Ok(())
    };
    let tallies = match &a.day2 {
        Some(p2) => {
            let (d1, d2) = generate_pair(&spec, a.seed)?;
            write(&a.out, &d1.events)?;
            write(p2, &d2.events)?;
            d1.tallies
        }
        None => {
            let g = generate(&spec, a.seed)?;
            write(&a.out, &g.events)?;
            g.tallies
        }
    };
    eprintln!(
        "wrote {} reads, {} writes; unique {:.4}, once {:.4}",
        tallies.reads,
        tallies.writes,
        tallies.unique_paths as f64 / tallies.reads.max(1) as f64,
        tallies.once_paths as f64 / tallies.unique_paths.max(1) as f64
    );
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let events = read_trace(&a.trace).with_context(|| format!("read {}", a.trace.display()))?;
    let s = compute_stats(&events);
    let mut out = io::stdout().lock();
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&s)?)?;
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value"])?;
    for (k, v) in [
        ("events", s.events.to_string()),
        ("list_ops", s.list_ops.to_string()),
        ("unique_paths", s.unique_paths.to_string()),
        ("once_paths", s.once_paths.to_string()),
        ("unique_fraction", format!("{:.6}", s.unique_fraction)),
        ("once_fraction", format!("{:.6}", s.once_fraction)),
        ("repeated_share", format!("{:.6}", s.repeated_share)),
        ("directories", s.directories.to_string()),
        ("files", s.files.to_string()),
    ] {
        w.write_record([k, &v])?;
    }
    for (d, n) in &s.depth_distribution {
        w.write_record([format!("files_at_depth_{d}"), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Replay(a) => replay(a),
        Cmd::BenchPipeline(a) => bench(a),
        Cmd::Generate(a) => gen(a),
        Cmd::Stats(a) => stats(a),
    }
}
