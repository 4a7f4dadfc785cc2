//! Running a configured experiment and writing its report as
//! `layer,metric,value` CSV rows plus a JSON document that embeds the
//! resolved configuration.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::config::{ExperimentConfig, Topology};
use crate::continuum::{ReplayReport, Role, World};
use crate::meta::serialize_record;
use crate::predict::{NGramModel, PredictError, PredictorKind};
use crate::replay::{remote_for, trace_ops, train_amp};
use crate::trace::{generate, generate_pair, read_trace, TraceError, TraceEvent};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceInfo {
    pub source: String,
    pub events: usize,
    pub list_ops: usize,
    pub writes: usize,
    pub training_events: usize,
}

/// Cached state of one layer at the end of the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerMemory {
    pub role: Role,
    pub entries: usize,
    pub serialized_bytes: u64,
    pub block_objects: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub trace: TraceInfo,
    pub replay: ReplayReport,
    pub memory: Vec<LayerMemory>,
}

struct LoadedTrace {
    source: String,
    events: Vec<TraceEvent>,
    training: Vec<TraceEvent>,
}

fn load(cfg: &ExperimentConfig) -> Result<LoadedTrace, TraceError> {
    let training = match &cfg.trace.train_path {
        Some(p) => read_trace(p)?,
        None => Vec::new(),
    };
    if let Some(p) = &cfg.trace.path {
        return Ok(LoadedTrace {
            source: p.display().to_string(),
            events: read_trace(p)?,
            training,
        });
    }
    let spec = &cfg.trace.generate;
    if cfg.trace.day == 2 {
        let (d1, d2) = generate_pair(spec, cfg.seed)?;
        return Ok(LoadedTrace {
            source: format!("generated day 2 (seed {})", cfg.seed),
            events: d2.events,
            training: d1.events,
        });
    }
    Ok(LoadedTrace {
        source: format!("generated (seed {})", cfg.seed),
        events: generate(spec, cfg.seed)?.events,
        training,
    })
}

/// Loads or generates the trace, replays it on a fresh world and collects
/// the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let t = load(cfg)?;
    let list_ops = t.events.iter().filter(|e| e.is_list()).count();
    let amp: Option<Arc<NGramModel>> =
        (cfg.uses(PredictorKind::Amp) && !t.training.is_empty()).then(|| Arc::new(train_amp(&t.training)));
    let remote = remote_for(t.training.iter().chain(&t.events));
    let mut world = World::new(&cfg.world(list_ops), remote, amp, cfg.seed)?;
    let replay = world.replay(trace_ops(&t.events));
    let memory = (0..world.node_count())
        .map(|n| {
            let mut bytes = 0u64;
            let mut blocks = 0u64;
            let records = world.cache(n).records();
            for r in &records {
                let len = serialize_record(r).len() as u64;
                bytes += len;
                blocks += len.div_ceil(cfg.block_size as u64).max(1);
            }
            LayerMemory {
                role: world.role(n),
                entries: world.cache(n).len(),
                serialized_bytes: bytes,
                block_objects: blocks,
            }
        })
        .collect();
    Ok(ExperimentReport {
        seed: cfg.seed,
        config: cfg.clone(),
        trace: TraceInfo {
            source: t.source,
            events: t.events.len(),
            list_ops,
            writes: t.events.iter().filter(|e| e.op.is_write()).count(),
            training_events: t.training.len(),
        },
        replay,
        memory,
    })
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Edge => "edge",
        Role::Fog => "fog",
        Role::Cloud => "cloud",
    }
}

impl ExperimentReport {
    /// `(layer, metric, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(String, String, String)> {
        let mut rows = Vec::new();
        let mut add = |layer: &str, metric: &str, value: String| rows.push((layer.into(), metric.into(), value));
        let r = &self.replay;
        let topo = match self.config.topology {
            Topology::E => "E",
            Topology::EC => "EC",
            Topology::EFC => "EFC",
        };
        add("all", "topology", topo.into());
        add("all", "seed", self.seed.to_string());
        add("all", "demands", r.demands.to_string());
        add("all", "writes", r.writes.to_string());
        add("all", "write_errors", r.write_errors.to_string());
        add("all", "hit_rate", format!("{:.6}", r.edge_hit_rate));
        add("all", "avg_latency_ms", format!("{:.6}", r.latency.avg_ms));
        add("all", "p50_latency_ms", format!("{:.3}", r.latency.p50_ms));
        add("all", "p95_latency_ms", format!("{:.3}", r.latency.p95_ms));
        add("all", "p99_latency_ms", format!("{:.3}", r.latency.p99_ms));
        add("all", "max_latency_ms", format!("{:.3}", r.latency.max_ms));
        add("all", "deleted", r.deleted.to_string());
        add("all", "failed", r.failed.to_string());
        add("all", "pushes", r.pushes.to_string());
        add("all", "sim_end_ms", format!("{:.3}", r.sim_end_ms));
        for (node, mem) in r.nodes.iter().zip(&self.memory) {
            let l = role_name(node.role);
            let c = &node.counters;
            add(l, "capacity", node.capacity.map_or("unbounded".into(), |c| c.to_string()));
            add(l, "hit_rate", format!("{:.6}", node.hit_rate));
            add(l, "lookups", c.lookups.to_string());
            add(l, "hits", c.hits.to_string());
            add(l, "upstream_sends", c.upstream_sends.to_string());
            add(l, "joins", c.joins.to_string());
            add(l, "candidates", c.candidates.to_string());
            add(l, "prefetch_requests", c.prefetch_requests.to_string());
            add(l, "expansions", c.expansions.to_string());
            add(l, "deletions_marked", c.deletions_marked.to_string());
            add(l, "backtraces", c.backtraces.to_string());
            add(l, "early_stops", c.early_stops.to_string());
            add(l, "lost_races", c.lost_races.to_string());
            add(l, "resyncs", c.resyncs.to_string());
            add(l, "failures", c.failures.to_string());
            add(l, "evictions", node.evictions.to_string());
            add(l, "entries", mem.entries.to_string());
            add(l, "serialized_bytes", mem.serialized_bytes.to_string());
            add(l, "block_objects", mem.block_objects.to_string());
        }
        let p = &r.pool;
        add("pool", "submitted", p.submitted.to_string());
        add("pool", "completed", p.completed.to_string());
        add("pool", "reclaimed", p.reclaimed.to_string());
        add("pool", "redispatched", p.redispatched.to_string());
        add("pool", "commands_sent", p.commands_sent.to_string());
        rows
    }

    pub fn write_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["layer", "metric", "value"])?;
        for (l, m, v) in self.rows() {
            out.write_record([l, m, v])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
