//! Fetch services in front of the remote I/O node, on the simulated clock.
//!
//! Each service owns one pipelined channel with capacity `C`. Queued jobs
//! are served by priority, then arrival order, and handed round-robin to
//! services with a free pipeline slot.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::meta::ResourcePath;
use crate::remote::{LatencyModel, SmpService};
use crate::sim::{ms, SimTime};
use crate::transfer::{MetaOp, Outcome, Protocol, SimChannel, SimChannelConfig, SmpEndpoint, SmpProtocol};

use super::{FetchResult, PRIORITY_DEMAND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub services: usize,
    pub capacity: usize,
    /// Link between each service and the remote node.
    pub link: LatencyModel,
    pub retry_budget: u32,
    /// Queued jobs below demand priority older than this are dropped.
    pub clean_age_ms: f64,
    pub service_time_ms: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            services: 30,
            capacity: 5,
            link: LatencyModel::fixed(15.0),
            retry_budget: 2,
            clean_age_ms: 60_000.0,
            service_time_ms: 0.0,
        }
    }
}

pub type JobId = u64;

#[derive(Debug, Clone)]
struct Job {
    path: ResourcePath,
    priority: i32,
    seq: u64,
    enqueued_at: SimTime,
    service: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolCompletion {
    pub job: JobId,
    pub result: FetchResult,
    pub enqueued_at: SimTime,
    pub finished_at: SimTime,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PoolStats {
    pub submitted: u64,
    pub completed: u64,
    pub reclaimed: u64,
    pub redispatched: u64,
    pub commands_sent: u64,
    /// Jobs ever handed to each service.
    pub assigned: Vec<u64>,
}

struct Service {
    channel: Option<SimChannel>,
    in_flight: usize,
}

pub struct ServicePool {
    cfg: PoolConfig,
    protocol: Arc<dyn Protocol>,
    remote: Arc<SmpService>,
    services: Vec<Service>,
    queue: BinaryHeap<(i32, Reverse<u64>, JobId)>,
    jobs: HashMap<JobId, Job>,
    rr: usize,
    next_job: JobId,
    next_seq: u64,
    seed: u64,
    generation: u64,
    done: Vec<PoolCompletion>,
    stats: PoolStats,
}

impl ServicePool {
    pub fn new(cfg: PoolConfig, remote: Arc<SmpService>, seed: u64) -> Self {
        let mut pool = Self {
            protocol: Arc::new(SmpProtocol::default()),
            remote,
            services: Vec::new(),
            queue: BinaryHeap::new(),
            jobs: HashMap::new(),
            rr: 0,
            next_job: 1,
            next_seq: 0,
            seed,
            generation: 0,
            done: Vec::new(),
            stats: PoolStats {
                assigned: vec![0; cfg.services],
                ..PoolStats::default()
            },
            cfg,
        };
        for i in 0..pool.cfg.services {
            let ch = pool.channel(i);
            pool.services.push(Service {
                channel: Some(ch),
                in_flight: 0,
            });
        }
        pool
    }

    fn channel(&mut self, i: usize) -> SimChannel {
        self.generation += 1;
        let cfg = SimChannelConfig {
            link: self.cfg.link,
            capacity: self.cfg.capacity.max(1),
            retry_budget: self.cfg.retry_budget,
            service_time: ms(self.cfg.service_time_ms),
            ..SimChannelConfig::default()
        };
        let seed = self.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ self.generation;
        SimChannel::new(
            cfg,
            self.protocol.clone(),
            Box::new(SmpEndpoint::new(self.remote.clone())),
            seed,
        )
        .expect("capacity is at least one")
    }

    pub fn config(&self) -> &PoolConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &PoolStats {
        &self.stats
    }

    pub fn queued(&self) -> usize {
        self.jobs.values().filter(|j| j.service.is_none()).count()
    }

    pub fn live_services(&self) -> usize {
        self.services.iter().filter(|s| s.channel.is_some()).count()
    }

    pub fn in_flight(&self, service: usize) -> usize {
        self.services[service].in_flight
    }

    pub fn is_idle(&self) -> bool {
        self.jobs.is_empty() && self.done.is_empty()
    }

    pub fn submit(&mut self, now: SimTime, path: ResourcePath, priority: i32) -> JobId {
        let id = self.next_job;
        self.next_job += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.stats.submitted += 1;
        self.jobs.insert(
            id,
            Job {
                path,
                priority,
                seq,
                enqueued_at: now,
                service: None,
            },
        );
        self.queue.push((priority, Reverse(seq), id));
        self.dispatch(now);
        id
    }

    /// Moves a still-queued job up to `priority`.
    pub fn raise(&mut self, job: JobId, priority: i32) {
        if let Some(j) = self.jobs.get_mut(&job) {
            if j.service.is_none() && priority > j.priority {
                j.priority = priority;
                self.queue.push((priority, Reverse(j.seq), job));
            }
        }
    }

    fn free_service(&self) -> Option<usize> {
        let n = self.services.len();
        (0..n)
            .map(|k| (self.rr + k) % n)
            .find(|&i| self.services[i].channel.is_some() && self.services[i].in_flight < self.cfg.capacity)
    }

    fn reclaim(&mut self, now: SimTime, id: JobId) {
        if let Some(j) = self.jobs.remove(&id) {
            self.stats.reclaimed += 1;
            self.done.push(PoolCompletion {
                job: id,
                result: FetchResult::Failed("reclaimed by queue cleaning".into()),
                enqueued_at: j.enqueued_at,
                finished_at: now,
            });
        }
    }

    fn dispatch(&mut self, now: SimTime) {
        let max_age = ms(self.cfg.clean_age_ms);
        while let Some(&(prio, _, id)) = self.queue.peek() {
            let current = self
                .jobs
                .get(&id)
                .filter(|j| j.service.is_none() && j.priority == prio);
            let Some(job) = current else {
                self.queue.pop();
                continue;
            };
            if job.priority < PRIORITY_DEMAND && now.saturating_sub(job.enqueued_at) > max_age {
                self.queue.pop();
                self.reclaim(now, id);
                continue;
            }
            let Some(s) = self.free_service() else { break };
            self.queue.pop();
            let path = job.path.clone();
            let template = self.protocol.template(&MetaOp::List(path));
            let svc = &mut self.services[s];
            svc.in_flight += 1;
            svc.channel.as_mut().expect("free service is live").submit(now, template, id);
            self.jobs.get_mut(&id).expect("present").service = Some(s);
            self.stats.assigned[s] += 1;
            self.rr = (s + 1) % self.services.len();
        }
    }

    /// Drops queued low-priority jobs past the cleaning age.
    pub fn clean(&mut self, now: SimTime) {
        let max_age = ms(self.cfg.clean_age_ms);
        let mut stale: Vec<(u64, JobId)> = self
            .jobs
            .iter()
            .filter(|(_, j)| {
                j.service.is_none() && j.priority < PRIORITY_DEMAND && now.saturating_sub(j.enqueued_at) > max_age
            })
            .map(|(&id, j)| (j.seq, id))
            .collect();
        stale.sort_unstable();
        for (_, id) in stale {
            self.reclaim(now, id);
        }
    }

    /// Processes channel events due by `now` and dispatches queued jobs.
    pub fn advance(&mut self, now: SimTime) {
        for s in 0..self.services.len() {
            let Some(ch) = self.services[s].channel.as_mut() else { continue };
            ch.advance(now);
            for c in ch.take_completions() {
                let Some(job) = self.jobs.remove(&c.tag) else { continue };
                self.services[s].in_flight -= 1;
                let result = match c.outcome {
                    Outcome::Success => match c.space.records.into_iter().next() {
                        Some(r) => FetchResult::Record(r),
                        None => FetchResult::Failed("empty reply".into()),
                    },
                    Outcome::Deleted => FetchResult::Deleted,
                    Outcome::Failed(r) => FetchResult::Failed(r.to_string()),
                    Outcome::Pending => unreachable!("completions are terminal"),
                };
                self.stats.completed += 1;
                self.done.push(PoolCompletion {
                    job: c.tag,
                    result,
                    enqueued_at: job.enqueued_at,
                    finished_at: now,
                });
            }
        }
        self.dispatch(now);
    }

    pub fn take_completions(&mut self) -> Vec<PoolCompletion> {
        std::mem::take(&mut self.done)
    }

    /// Wake-ups the owner must schedule to keep channels moving.
    pub fn wakes(&mut self) -> Vec<SimTime> {
        self.services
            .iter_mut()
            .filter_map(|s| s.channel.as_mut().and_then(SimChannel::wake_needed))
            .collect()
    }

    /// Earliest pending channel event.
    pub fn next_due(&self) -> Option<SimTime> {
        self.services
            .iter()
            .filter_map(|s| s.channel.as_ref().and_then(SimChannel::next_due))
            .min()
    }

    /// Stops a service. Its unacknowledged jobs go back to the queue in
    /// their original order.
    pub fn kill(&mut self, service: usize, now: SimTime) {
        if self.services[service].channel.take().is_none() {
            return;
        }
        self.services[service].in_flight = 0;
        let mut lost: Vec<(u64, JobId)> = self
            .jobs
            .iter()
            .filter(|(_, j)| j.service == Some(service))
            .map(|(&id, j)| (j.seq, id))
            .collect();
        lost.sort_unstable();
        for (_, id) in lost {
            let j = self.jobs.get_mut(&id).expect("present");
            j.service = None;
            self.queue.push((j.priority, Reverse(j.seq), id));
            self.stats.redispatched += 1;
        }
        self.dispatch(now);
    }

    pub fn revive(&mut self, service: usize, now: SimTime) {
        if self.services[service].channel.is_none() {
            let ch = self.channel(service);
            self.services[service].channel = Some(ch);
            self.dispatch(now);
        }
    }

    /// Runs the pool alone until all jobs finish.
    pub fn run_to_idle(&mut self, mut now: SimTime) -> SimTime {
        while let Some(t) = self.next_due() {
            now = now.max(t);
            self.advance(now);
        }
        self.stats.commands_sent = self
            .services
            .iter()
            .filter_map(|s| s.channel.as_ref())
            .map(|c| c.stats().commands_sent)
            .sum();
        now
    }
}
