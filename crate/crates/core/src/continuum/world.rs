//! Discrete-event model of a layer chain: node 0 is the edge that clients
//! talk to, the last node reaches the remote I/O node through a
//! [`ServicePool`]. Everything runs on one simulated clock.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::MetaCache;
use crate::meta::{EntryKind, MetadataRecord, OverwriteOutcome, ResourcePath};
use crate::predict::{self, Attributes, Fanout, NGramModel, PredictError, Predictor, PredictorConfig, PredictorInput};
use crate::remote::{LatencyModel, Mutation, SmpService};
use crate::sim::{ms, to_ms, Scheduler, SimTime};

use super::pool::{JobId, PoolConfig, PoolStats, ServicePool};
use super::{FetchResult, InflightTable, Join, Origin, PrefetchRequest, RequestIdentity, PRIORITY_PREFETCH, PRIORITY_RESYNC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Edge,
    Fog,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerConfig {
    pub role: Role,
    /// Cache entries; `None` never evicts, `Some(0)` caches nothing.
    pub capacity: Option<usize>,
    /// Link to the next layer. Unused on the last layer, which talks to
    /// the remote node through the service pool.
    pub uplink: LatencyModel,
    #[serde(flatten)]
    pub predictor: PredictorConfig,
    /// Children queued per TTL expansion when no fanout is given.
    pub expansion_limit: usize,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            role: Role::Edge,
            capacity: Some(0),
            uplink: LatencyModel::fixed(5.0),
            predictor: PredictorConfig::default(),
            expansion_limit: 1024,
        }
    }
}

impl LayerConfig {
    pub fn new(role: Role, capacity: Option<usize>, uplink_ms: f64) -> Self {
        Self {
            role,
            capacity,
            uplink: LatencyModel::fixed(uplink_ms),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub layers: Vec<LayerConfig>,
    pub pool: PoolConfig,
    /// Keep every demand result, not only its latency.
    pub record_outcomes: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self::edge_cloud(Some(0))
    }
}

impl WorldConfig {
    /// Clients talk straight to the remote node, 32 ms round trip.
    pub fn remote_direct() -> Self {
        Self {
            layers: vec![LayerConfig::new(Role::Edge, Some(0), 0.0)],
            pool: PoolConfig {
                link: LatencyModel::fixed(16.0),
                ..PoolConfig::default()
            },
            record_outcomes: false,
        }
    }

    /// Edge (5 ms one way) to an unbounded cloud (15 ms one way to the
    /// remote node): 40 ms round trip end to end.
    pub fn edge_cloud(edge: Option<usize>) -> Self {
        Self {
            layers: vec![
                LayerConfig::new(Role::Edge, edge, 5.0),
                LayerConfig::new(Role::Cloud, None, 0.0),
            ],
            pool: PoolConfig::default(),
            record_outcomes: false,
        }
    }

    /// Edge (1 ms) to fog (5 ms) to an unbounded cloud.
    pub fn edge_fog_cloud(edge: Option<usize>, fog: Option<usize>) -> Self {
        Self {
            layers: vec![
                LayerConfig::new(Role::Edge, edge, 1.0),
                LayerConfig::new(Role::Fog, fog, 5.0),
                LayerConfig::new(Role::Cloud, None, 0.0),
            ],
            pool: PoolConfig::default(),
            record_outcomes: false,
        }
    }

    pub fn layer_mut(&mut self, role: Role) -> Option<&mut LayerConfig> {
        self.layers.iter_mut().find(|l| l.role == role)
    }
}

/// One client operation at a point in simulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedOp {
    pub at: SimTime,
    pub op: ClientOp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientOp {
    Read {
        path: ResourcePath,
        attributes: Attributes,
        force_refresh: bool,
    },
    /// Applied to the remote tree directly, invisible to the caches.
    Write(Mutation),
}

impl TimedOp {
    pub fn read(at: SimTime, path: ResourcePath) -> Self {
        Self {
            at,
            op: ClientOp::Read {
                path,
                attributes: Attributes::default(),
                force_refresh: false,
            },
        }
    }

    pub fn refresh(at: SimTime, path: ResourcePath) -> Self {
        Self {
            at,
            op: ClientOp::Read {
                path,
                attributes: Attributes::default(),
                force_refresh: true,
            },
        }
    }

    pub fn write(at: SimTime, m: Mutation) -> Self {
        Self {
            at,
            op: ClientOp::Write(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandOutcome {
    pub path: ResourcePath,
    pub start: SimTime,
    pub latency: SimTime,
    pub result: FetchResult,
}

/// A deletion push that reached a downstream node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub at: SimTime,
    pub from: usize,
    pub to: usize,
    pub path: ResourcePath,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct NodeCounters {
    /// Lookups made for demand requests.
    pub lookups: u64,
    pub hits: u64,
    pub upstream_sends: u64,
    pub joins: u64,
    pub candidates: u64,
    /// Candidates that missed the cache and became requests.
    pub prefetch_requests: u64,
    pub expansions: u64,
    pub deletions_marked: u64,
    pub backtraces: u64,
    pub early_stops: u64,
    pub lost_races: u64,
    pub resyncs: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub role: Role,
    pub capacity: Option<usize>,
    pub hit_rate: f64,
    pub cache_len: usize,
    pub evictions: u64,
    #[serde(flatten)]
    pub counters: NodeCounters,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: usize,
    pub avg_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[SimTime]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut v = samples.to_vec();
        v.sort_unstable();
        let rank = |q: f64| {
            let i = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
            to_ms(v[i - 1])
        };
        Self {
            count: v.len(),
            avg_ms: v.iter().map(|&t| to_ms(t)).sum::<f64>() / v.len() as f64,
            p50_ms: rank(0.50),
            p95_ms: rank(0.95),
            p99_ms: rank(0.99),
            max_ms: to_ms(*v.last().expect("non-empty")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub demands: u64,
    pub writes: u64,
    pub write_errors: u64,
    pub edge_hit_rate: f64,
    pub latency: LatencySummary,
    pub deleted: u64,
    pub failed: u64,
    pub pushes: u64,
    pub sim_end_ms: f64,
    pub nodes: Vec<NodeReport>,
    pub pool: PoolStats,
}

#[derive(Debug)]
enum Waiter {
    Client { start: SimTime },
    Downstream { node: usize, ctx: u64 },
    Local(PrefetchRequest),
}

enum Event {
    Client(ClientOp),
    Arrive {
        node: usize,
        from: usize,
        ctx: u64,
        req: PrefetchRequest,
    },
    Respond {
        node: usize,
        ctx: u64,
        result: FetchResult,
    },
    Upgrade {
        node: usize,
        id: RequestIdentity,
        priority: i32,
    },
    Push {
        node: usize,
        from: usize,
        path: ResourcePath,
    },
    PoolWake,
    Clean,
}

struct Node {
    role: Role,
    capacity: Option<usize>,
    cache: MetaCache,
    predictor: Option<Box<dyn Predictor>>,
    inflight: InflightTable<Waiter>,
    /// Keys fetched by downstream nodes, for deletion pushes.
    subscribers: BTreeMap<ResourcePath, BTreeSet<usize>>,
    uplink: LatencyModel,
    expansion_limit: usize,
    counters: NodeCounters,
}

struct TopJob {
    ctx: u64,
    /// Digest of the cached live record when the job was issued.
    expected: Option<u64>,
}

pub struct World {
    nodes: Vec<Node>,
    pool: ServicePool,
    remote: Arc<SmpService>,
    sched: Scheduler<Event>,
    rng: ChaCha8Rng,
    jobs: HashMap<JobId, TopJob>,
    ctx_job: HashMap<u64, JobId>,
    clean_pending: bool,
    record_outcomes: bool,
    latencies: Vec<SimTime>,
    outcomes: Vec<DemandOutcome>,
    deliveries: Vec<Delivery>,
    demands: u64,
    writes: u64,
    write_errors: u64,
    deleted: u64,
    failed: u64,
}

impl World {
    pub fn new(
        cfg: &WorldConfig,
        remote: Arc<SmpService>,
        amp_model: Option<Arc<NGramModel>>,
        seed: u64,
    ) -> Result<Self, PredictError> {
        assert!(!cfg.layers.is_empty(), "a world needs at least one layer");
        let mut nodes = Vec::with_capacity(cfg.layers.len());
        for l in &cfg.layers {
            let cache = match l.capacity {
                Some(c) => MetaCache::new(c),
                None => MetaCache::unbounded(),
            };
            let cap_hint = l.capacity.unwrap_or(65_536);
            nodes.push(Node {
                role: l.role,
                capacity: l.capacity,
                cache,
                predictor: predict::build(&l.predictor, cap_hint, amp_model.clone())?,
                inflight: InflightTable::new(),
                subscribers: BTreeMap::new(),
                uplink: l.uplink,
                expansion_limit: l.expansion_limit,
                counters: NodeCounters::default(),
            });
        }
        Ok(Self {
            nodes,
            pool: ServicePool::new(cfg.pool.clone(), remote.clone(), seed),
            remote,
            sched: Scheduler::new(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5EED),
            jobs: HashMap::new(),
            ctx_job: HashMap::new(),
            clean_pending: false,
            record_outcomes: cfg.record_outcomes,
            latencies: Vec::new(),
            outcomes: Vec::new(),
            deliveries: Vec::new(),
            demands: 0,
            writes: 0,
            write_errors: 0,
            deleted: 0,
            failed: 0,
        })
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn role(&self, node: usize) -> Role {
        self.nodes[node].role
    }

    pub fn cache(&self, node: usize) -> &MetaCache {
        &self.nodes[node].cache
    }

    pub fn counters(&self, node: usize) -> &NodeCounters {
        &self.nodes[node].counters
    }

    pub fn pool(&self) -> &ServicePool {
        &self.pool
    }

    pub fn pool_mut(&mut self) -> &mut ServicePool {
        &mut self.pool
    }

    pub fn remote(&self) -> &Arc<SmpService> {
        &self.remote
    }

    pub fn latencies(&self) -> &[SimTime] {
        &self.latencies
    }

    pub fn outcomes(&self) -> &[DemandOutcome] {
        &self.outcomes
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    pub fn subscribers(&self, node: usize, path: &ResourcePath) -> Vec<usize> {
        self.nodes[node]
            .subscribers
            .get(path)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    fn top(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn submit(&mut self, op: TimedOp) {
        self.sched.at(op.at, Event::Client(op.op));
    }

    /// Processes every event up to and including `until`.
    pub fn run_until(&mut self, until: SimTime) {
        while self.sched.peek_time().is_some_and(|t| t <= until) {
            self.step();
        }
    }

    /// Runs until nothing is left to do.
    pub fn run(&mut self) -> SimTime {
        while !self.sched.is_empty() {
            self.step();
        }
        self.now()
    }

    /// Feeds `ops` (sorted by time) open-loop and runs to quiescence.
    pub fn replay(&mut self, ops: impl IntoIterator<Item = TimedOp>) -> ReplayReport {
        let mut ops = ops.into_iter().peekable();
        loop {
            match (ops.peek().map(|o| o.at), self.sched.peek_time()) {
                (Some(o), Some(e)) if e < o => self.step(),
                (Some(_), _) => {
                    let op = ops.next().expect("peeked");
                    self.submit(op);
                    self.step();
                }
                (None, Some(_)) => self.step(),
                (None, None) => break,
            }
        }
        self.report()
    }

    fn step(&mut self) {
        let Some((now, ev)) = self.sched.pop() else { return };
        match ev {
            Event::Client(op) => self.client(op, now),
            Event::Arrive { node, from, ctx, req } => {
                self.node_request(node, req, Waiter::Downstream { node: from, ctx }, None, now)
            }
            Event::Respond { node, ctx, result } => self.respond(node, ctx, result, None, now),
            Event::Upgrade { node, id, priority } => {
                if let Some(ctx) = self.nodes[node].inflight.raise(&id, priority) {
                    self.raise_upstream(node, ctx, id, priority, now);
                }
            }
            Event::Push { node, from, path } => {
                self.deliveries.push(Delivery {
                    at: now,
                    from,
                    to: node,
                    path: path.clone(),
                });
                self.mark_deleted(node, &path, now);
            }
            Event::PoolWake => self.pool.advance(now),
            Event::Clean => {
                self.clean_pending = false;
                self.pool.clean(now);
            }
        }
        self.drain_pool(now);
    }

    fn drain_pool(&mut self, now: SimTime) {
        loop {
            let done = self.pool.take_completions();
            if done.is_empty() {
                break;
            }
            for c in done {
                let Some(job) = self.jobs.remove(&c.job) else { continue };
                self.ctx_job.remove(&job.ctx);
                let top = self.top();
                self.respond(top, job.ctx, c.result, Some(job.expected), now);
            }
        }
        for t in self.pool.wakes() {
            self.sched.at(t, Event::PoolWake);
        }
        if !self.clean_pending && !self.pool.is_idle() {
            self.clean_pending = true;
            self.sched.at(now + ms(self.pool.config().clean_age_ms), Event::Clean);
        }
    }

    fn client(&mut self, op: ClientOp, now: SimTime) {
        match op {
            ClientOp::Read {
                path,
                attributes,
                force_refresh,
            } => {
                self.demands += 1;
                let mut req = PrefetchRequest::demand(path);
                req.force_refresh = force_refresh;
                self.node_request(0, req, Waiter::Client { start: now }, Some(&attributes), now);
            }
            ClientOp::Write(m) => {
                self.writes += 1;
                let now_ms = to_ms(now) as u64;
                if let Err(e) = self.remote.tree().write().apply(&m, now_ms) {
                    log::debug!("write rejected: {e}");
                    self.write_errors += 1;
                }
            }
        }
    }

    fn link_delay(&mut self, lower: usize) -> SimTime {
        self.nodes[lower].uplink.sample_us(&mut self.rng)
    }

    fn node_request(
        &mut self,
        n: usize,
        req: PrefetchRequest,
        waiter: Waiter,
        attrs: Option<&Attributes>,
        now: SimTime,
    ) {
        if let Waiter::Downstream { node: d, .. } = waiter {
            self.nodes[n].subscribers.entry(req.path.clone()).or_default().insert(d);
        }
        let demand = req.is_demand();
        if !req.force_refresh {
            let node = &mut self.nodes[n];
            let cached = if demand {
                node.counters.lookups += 1;
                node.cache.get(&req.path)
            } else {
                node.cache.peek(&req.path)
            };
            if let Some(r) = cached.filter(MetadataRecord::is_live) {
                if demand {
                    node.counters.hits += 1;
                }
                self.deliver(n, waiter, FetchResult::Record(r), now);
                if demand {
                    self.predict(n, &req.path, attrs, true, now);
                }
                return;
            }
        }
        if demand {
            self.nodes[n].cache.note_miss(&req.path);
        }
        let path = req.path.clone();
        match self.nodes[n].inflight.join(&req, waiter) {
            Join::New { ctx } => self.send_up(n, ctx, req, now),
            Join::Joined { ctx, raised } => {
                self.nodes[n].counters.joins += 1;
                if let Some(p) = raised {
                    self.raise_upstream(n, ctx, req.identity(), p, now);
                }
            }
        }
        if demand {
            self.predict(n, &path, attrs, false, now);
        }
    }

    fn send_up(&mut self, n: usize, ctx: u64, req: PrefetchRequest, now: SimTime) {
        self.nodes[n].counters.upstream_sends += 1;
        if n == self.top() {
            let expected = self.nodes[n]
                .cache
                .peek(&req.path)
                .filter(MetadataRecord::is_live)
                .map(|r| r.digest());
            let job = self.pool.submit(now, req.path, req.priority);
            self.jobs.insert(job, TopJob { ctx, expected });
            self.ctx_job.insert(ctx, job);
        } else {
            let at = now + self.link_delay(n);
            self.sched.at(
                at,
                Event::Arrive {
                    node: n + 1,
                    from: n,
                    ctx,
                    req,
                },
            );
        }
    }

    fn raise_upstream(&mut self, n: usize, ctx: u64, id: RequestIdentity, priority: i32, now: SimTime) {
        if n == self.top() {
            if let Some(&job) = self.ctx_job.get(&ctx) {
                self.pool.raise(job, priority);
            }
        } else {
            let at = now + self.link_delay(n);
            self.sched.at(
                at,
                Event::Upgrade {
                    node: n + 1,
                    id,
                    priority,
                },
            );
        }
    }

    fn predict(&mut self, n: usize, path: &ResourcePath, attrs: Option<&Attributes>, hit: bool, now: SimTime) {
        let node = &mut self.nodes[n];
        let Some(p) = node.predictor.as_mut() else { return };
        let input = PredictorInput {
            path: path.clone(),
            attributes: attrs.cloned().unwrap_or_default(),
            timestamp_ms: to_ms(now) as u64,
        };
        let cands = p.observe(&input, hit, &node.cache);
        node.counters.candidates += cands.len() as u64;
        for c in cands {
            let cached = self.nodes[n].cache.peek(&c.path).is_some_and(|r| r.is_live());
            if cached && c.ttl == 0 {
                continue;
            }
            if !cached {
                self.nodes[n].counters.prefetch_requests += 1;
            }
            let req = PrefetchRequest {
                path: c.path,
                priority: PRIORITY_PREFETCH,
                ttl: c.ttl,
                force_refresh: false,
                origin: Origin::Predictor,
                fanout: c.fanout,
            };
            self.node_request(n, req.clone(), Waiter::Local(req), None, now);
        }
    }

    fn deliver(&mut self, n: usize, waiter: Waiter, result: FetchResult, now: SimTime) {
        match waiter {
            Waiter::Client { start } => {
                let latency = now - start;
                self.latencies.push(latency);
                match &result {
                    FetchResult::Record(_) => {}
                    FetchResult::Deleted => self.deleted += 1,
                    FetchResult::Failed(_) => self.failed += 1,
                }
                if self.record_outcomes {
                    let path = match &result {
                        FetchResult::Record(r) => r.path().clone(),
                        _ => ResourcePath::root(),
                    };
                    self.outcomes.push(DemandOutcome {
                        path,
                        start,
                        latency,
                        result,
                    });
                }
            }
            Waiter::Downstream { node, ctx } => {
                let at = now + self.link_delay(node);
                self.sched.at(at, Event::Respond { node, ctx, result });
            }
            Waiter::Local(req) => match &result {
                FetchResult::Record(r) if req.ttl > 0 && r.is_live() && r.kind() == EntryKind::Directory => {
                    self.expand(n, &req, r, now);
                }
                FetchResult::Failed(m) => log::debug!("prefetch of {} failed: {m}", req.path),
                _ => {}
            },
        }
    }

    fn expand(&mut self, n: usize, req: &PrefetchRequest, listing: &MetadataRecord, now: SimTime) {
        let fanout = req
            .fanout
            .clone()
            .unwrap_or_else(|| Fanout::children(self.nodes[n].expansion_limit));
        let node = &self.nodes[n];
        let kids = fanout.expand(listing, |p| {
            node.inflight.contains(&RequestIdentity {
                path: p.clone(),
                force_refresh: false,
            })
        });
        self.nodes[n].counters.expansions += 1;
        for p in kids {
            let child = req.child(p);
            self.node_request(n, child.clone(), Waiter::Local(child), None, now);
        }
    }

    fn respond(&mut self, n: usize, ctx: u64, result: FetchResult, expected: Option<Option<u64>>, now: SimTime) {
        let Some((req, waiters)) = self.nodes[n].inflight.complete(ctx) else { return };
        let result = match result {
            FetchResult::Record(r) => {
                let cache = &self.nodes[n].cache;
                if cache.put(r.clone()).stored {
                    FetchResult::Record(r)
                } else {
                    FetchResult::Record(cache.peek(r.path()).filter(MetadataRecord::is_live).unwrap_or(r))
                }
            }
            FetchResult::Deleted => match expected {
                Some(expected) => self.backtrace(n, &req, expected, now),
                None => {
                    self.mark_deleted(n, &req.path, now);
                    FetchResult::Deleted
                }
            },
            FetchResult::Failed(m) => {
                self.nodes[n].counters.failures += 1;
                FetchResult::Failed(m)
            }
        };
        for w in waiters {
            self.deliver(n, w, result.clone(), now);
        }
    }

    /// The remote reported `req.path` missing at the top node.
    fn backtrace(&mut self, n: usize, req: &PrefetchRequest, expected: Option<u64>, now: SimTime) -> FetchResult {
        self.nodes[n].counters.backtraces += 1;
        let path = &req.path;
        let current = self.nodes[n].cache.peek(path).filter(MetadataRecord::is_live);
        let Some(cur) = current else {
            self.nodes[n].counters.early_stops += 1;
            self.mark_deleted(n, path, now);
            return FetchResult::Deleted;
        };
        let applied = match expected {
            Some(d) => self.nodes[n].cache.conditional_overwrite(path, d, cur.deleted_marker()),
            None => OverwriteOutcome::LostRace,
        };
        if applied == OverwriteOutcome::LostRace {
            self.nodes[n].counters.lost_races += 1;
            return FetchResult::Record(cur);
        }
        self.mark_deleted(n, path, now);
        let layers = if req.origin == Origin::DeleteResync { req.ttl + 1 } else { 1 };
        match path.parent() {
            Some(parent) if self.nodes[n].cache.peek(&parent).is_some_and(|r| r.is_live()) => {
                self.nodes[n].counters.resyncs += 1;
                let resync = PrefetchRequest {
                    path: parent,
                    priority: PRIORITY_RESYNC,
                    ttl: layers,
                    force_refresh: true,
                    origin: Origin::DeleteResync,
                    fanout: None,
                };
                self.node_request(n, resync.clone(), Waiter::Local(resync), None, now);
            }
            _ => self.nodes[n].counters.early_stops += 1,
        }
        FetchResult::Deleted
    }

    /// Marks `path` and everything below it deleted at node `n` and pushes
    /// the deletion to downstream subscribers of any affected key.
    fn mark_deleted(&mut self, n: usize, path: &ResourcePath, now: SimTime) {
        let node = &mut self.nodes[n];
        node.counters.deletions_marked += node.cache.mark_subtree_deleted(path) as u64;
        let affected: Vec<ResourcePath> = node
            .subscribers
            .range(path.clone()..)
            .take_while(|(k, _)| k.starts_with(path))
            .map(|(k, _)| k.clone())
            .collect();
        let mut targets = BTreeSet::new();
        for k in affected {
            if let Some(s) = node.subscribers.remove(&k) {
                targets.extend(s);
            }
        }
        for d in targets {
            let at = now + self.link_delay(d);
            self.sched.at(
                at,
                Event::Push {
                    node: d,
                    from: n,
                    path: path.clone(),
                },
            );
        }
    }

    /// Live cached records, at any node, whose path the remote no longer has.
    pub fn live_orphans(&self) -> Vec<(usize, ResourcePath)> {
        let tree = self.remote.tree().read();
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for r in n.cache.records() {
                if r.is_live() && !tree.exists(r.path()) {
                    out.push((i, r.path().clone()));
                }
            }
        }
        out.sort();
        out
    }

    pub fn report(&self) -> ReplayReport {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let s = n.cache.stats();
                NodeReport {
                    role: n.role,
                    capacity: n.capacity,
                    hit_rate: ratio(n.counters.hits, n.counters.lookups),
                    cache_len: n.cache.len(),
                    evictions: s.evictions,
                    counters: n.counters.clone(),
                }
            })
            .collect();
        ReplayReport {
            demands: self.demands,
            writes: self.writes,
            write_errors: self.write_errors,
            edge_hit_rate: ratio(self.nodes[0].counters.hits, self.nodes[0].counters.lookups),
            latency: LatencySummary::from_samples(&self.latencies),
            deleted: self.deleted,
            failed: self.failed,
            pushes: self.deliveries.len() as u64,
            sim_end_ms: to_ms(self.now()),
            nodes,
            pool: self.pool.stats().clone(),
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
