//! Pipeline and service-pool benchmarks on the simulated clock.

use std::io::Write;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::Serialize;

use crate::continuum::{LatencySummary, PoolConfig, ServicePool, PRIORITY_DEMAND};
use crate::meta::{EntryKind, ResourcePath};
use crate::remote::{DirectoryTree, LatencyModel, SmpService};
use crate::sim::{ms, to_ms, SimTime};
use crate::transfer::{MetaOp, Protocol, SimChannel, SimChannelConfig, SmpEndpoint, SmpProtocol, TransferError};

fn file(i: usize) -> ResourcePath {
    ResourcePath::from_segments(["bench".to_string(), format!("f{i:06}")]).expect("valid segments")
}

/// A remote holding `/bench/f000000 ..` and a chain `/c1/c2/..` of
/// `depth` directories.
fn bench_remote(files: usize, depth: usize) -> Arc<SmpService> {
    let mut t = DirectoryTree::new().without_event_log();
    for i in 0..files {
        t.ensure(&file(i), EntryKind::File, 0);
    }
    if depth > 0 {
        t.ensure(&chain(depth), EntryKind::Directory, 0);
    }
    Arc::new(SmpService::new(Arc::new(RwLock::new(t))))
}

fn chain(depth: usize) -> ResourcePath {
    ResourcePath::from_segments((1..=depth).map(|i| format!("c{i}"))).expect("valid segments")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelRun {
    pub capacity: usize,
    pub rtt_ms: f64,
    pub requests: usize,
    pub total_ms: f64,
    pub latencies_ms: Vec<f64>,
}

fn channel(capacity: usize, rtt_ms: f64, remote: Arc<SmpService>) -> Result<SimChannel, TransferError> {
    SimChannel::new(
        SimChannelConfig {
            link: LatencyModel::from_rtt(rtt_ms),
            capacity,
            ..SimChannelConfig::default()
        },
        Arc::new(SmpProtocol::default()),
        Box::new(SmpEndpoint::new(remote)),
        0,
    )
}

/// `requests` independent single-command STATs submitted together on one
/// channel.
pub fn channel_burst(capacity: usize, rtt_ms: f64, requests: usize) -> Result<ChannelRun, TransferError> {
    let mut ch = channel(capacity, rtt_ms, bench_remote(requests, 0))?;
    let proto = SmpProtocol::default();
    for i in 0..requests {
        ch.submit(0, proto.template(&MetaOp::Stat(file(i))), i as u64);
    }
    let mut latencies = vec![0.0; requests];
    let mut end = 0;
    while let Some(t) = ch.next_due() {
        end = end.max(t);
        ch.advance(end);
        for c in ch.take_completions() {
            latencies[c.tag as usize] = to_ms(end);
        }
    }
    Ok(ChannelRun {
        capacity,
        rtt_ms,
        requests,
        total_ms: to_ms(end),
        latencies_ms: latencies,
    })
}

/// Completion time of one dependent request of `commands` chained STATs.
pub fn dependent_chain(rtt_ms: f64, commands: usize) -> Result<f64, TransferError> {
    assert!(commands >= 1);
    let depth = commands - 1;
    let mut ch = channel(commands, rtt_ms, bench_remote(0, depth))?;
    let walk = if depth == 0 { ResourcePath::root() } else { chain(depth) };
    ch.submit(0, SmpProtocol::default().template(&MetaOp::Walk(walk)), 0);
    Ok(to_ms(ch.run_to_idle(0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolBench {
    pub requests: usize,
    pub rtt_ms: f64,
    pub services: usize,
    pub capacity: usize,
    /// Requests arrive open-loop this far apart; 0 submits them all at once.
    pub arrival_interval_ms: f64,
}

impl Default for PoolBench {
    fn default() -> Self {
        Self {
            requests: 1000,
            rtt_ms: 40.0,
            services: 30,
            capacity: 5,
            arrival_interval_ms: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolRun {
    pub bench: PoolBench,
    pub latencies_ms: Vec<f64>,
    pub summary: LatencySummary,
    pub total_ms: f64,
}

impl PoolRun {
    /// Share of requests whose latency lies in `[lo, hi]` ms.
    pub fn fraction_within(&self, lo: f64, hi: f64) -> f64 {
        if self.latencies_ms.is_empty() {
            return 0.0;
        }
        let n = self.latencies_ms.iter().filter(|&&l| (lo..=hi).contains(&l)).count();
        n as f64 / self.latencies_ms.len() as f64
    }
}

/// Distinct demand fetches through a service pool, each timed from its
/// arrival to its completion.
pub fn pool_run(b: &PoolBench, seed: u64) -> PoolRun {
    let mut pool = ServicePool::new(
        PoolConfig {
            services: b.services,
            capacity: b.capacity,
            link: LatencyModel::from_rtt(b.rtt_ms),
            ..PoolConfig::default()
        },
        bench_remote(b.requests, 0),
        seed,
    );
    let arrival = |i: usize| ms(i as f64 * b.arrival_interval_ms);
    let mut latencies = vec![0.0; b.requests];
    let mut job_of = std::collections::HashMap::new();
    let mut next = 0;
    let mut now: SimTime = 0;
    loop {
        let due = pool.next_due();
        let arr = (next < b.requests).then(|| arrival(next));
        now = match (arr, due) {
            (Some(a), Some(d)) if d < a => d,
            (Some(a), _) => {
                let id = pool.submit(a, file(next), PRIORITY_DEMAND);
                job_of.insert(id, next);
                next += 1;
                a
            }
            (None, Some(d)) => d,
            (None, None) => break,
        }
        .max(now);
        pool.advance(now);
        for c in pool.take_completions() {
            let i = job_of[&c.job];
            latencies[i] = to_ms(c.finished_at - c.enqueued_at);
        }
    }
    let samples: Vec<SimTime> = latencies.iter().map(|&l| ms(l)).collect();
    PoolRun {
        bench: b.clone(),
        summary: LatencySummary::from_samples(&samples),
        latencies_ms: latencies,
        total_ms: to_ms(now),
    }
}

/// Latency rows `services,capacity,request,latency_ms` for each run.
pub fn write_latency_csv(w: impl Write, runs: &[PoolRun]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["services", "capacity", "request", "latency_ms"])?;
    for r in runs {
        for (i, l) in r.latencies_ms.iter().enumerate() {
            out.write_record([
                r.bench.services.to_string(),
                r.bench.capacity.to_string(),
                i.to_string(),
                format!("{l:.3}"),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One aggregate row per run.
pub fn write_summary_csv(w: impl Write, runs: &[PoolRun]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "services", "capacity", "requests", "rtt_ms", "avg_ms", "p50_ms", "p95_ms", "p99_ms", "max_ms", "within_1_2_rtt",
    ])?;
    for r in runs {
        let s = &r.summary;
        let rtt = r.bench.rtt_ms;
        out.write_record([
            r.bench.services.to_string(),
            r.bench.capacity.to_string(),
            r.bench.requests.to_string(),
            format!("{rtt}"),
            format!("{:.3}", s.avg_ms),
            format!("{:.3}", s.p50_ms),
            format!("{:.3}", s.p95_ms),
            format!("{:.3}", s.p99_ms),
            format!("{:.3}", s.max_ms),
            format!("{:.4}", r.fraction_within(rtt, 2.0 * rtt)),
        ])?;
    }
    out.flush()?;
    Ok(())
}
