//! A channel over a simulated link, driven by an external event loop.
//!
//! Commands travel to the server with one sampled one-way delay, are
//! answered there, and the reply batch travels back with another. Both
//! directions preserve order, as a single TCP stream would. The owner
//! schedules a wake-up at [`SimChannel::wake_needed`] and calls
//! [`SimChannel::advance`] when it fires.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::remote::{LatencyModel, Session, SmpService};
use crate::sim::{ms, SimTime};

use super::{Completion, FailReason, Matrix, Protocol, RequestId, RequestTemplate, TransferError};

/// The far end of a simulated connection.
pub trait LineServer: Send {
    fn handle(&mut self, line: &str) -> Vec<String>;
    /// A new connection starts; per-connection state resets.
    fn reset(&mut self) {}
}

pub struct SmpEndpoint {
    service: Arc<SmpService>,
    session: Session,
}

impl SmpEndpoint {
    pub fn new(service: Arc<SmpService>) -> Self {
        Self {
            service,
            session: Session::default(),
        }
    }
}

impl LineServer for SmpEndpoint {
    fn handle(&mut self, line: &str) -> Vec<String> {
        self.service.handle(&mut self.session, line)
    }

    fn reset(&mut self) {
        self.session = Session::default();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimChannelConfig {
    pub link: LatencyModel,
    pub capacity: usize,
    pub retry_budget: u32,
    pub idle_timeout: SimTime,
    /// Server-side processing time per command.
    pub service_time: SimTime,
    /// Run the protocol handshake on every (re)connect.
    pub handshake: bool,
    pub trace: bool,
}

impl Default for SimChannelConfig {
    fn default() -> Self {
        Self {
            link: LatencyModel::fixed(16.0),
            capacity: 5,
            retry_budget: super::matrix::DEFAULT_RETRY_BUDGET,
            idle_timeout: ms(30_000.0),
            service_time: 0,
            handshake: false,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LinkState {
    Connected,
    Connecting { ready_at: SimTime },
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SimChannelStats {
    pub commands_sent: u64,
    pub reply_batches: u64,
    pub reconnects: u64,
    pub desyncs: u64,
}

pub struct SimChannel {
    matrix: Matrix,
    cfg: SimChannelConfig,
    rng: ChaCha8Rng,
    server: Box<dyn LineServer>,
    protocol: Arc<dyn Protocol>,
    to_server: VecDeque<(SimTime, String)>,
    to_client: VecDeque<(SimTime, Vec<String>)>,
    last_reply_due: SimTime,
    last_arrival: SimTime,
    last_activity: SimTime,
    state: LinkState,
    scheduled_wake: Option<SimTime>,
    handshake: Option<RequestId>,
    stats: SimChannelStats,
    completions: Vec<Completion>,
}

impl SimChannel {
    pub fn new(
        cfg: SimChannelConfig,
        protocol: Arc<dyn Protocol>,
        server: Box<dyn LineServer>,
        seed: u64,
    ) -> Result<Self, TransferError> {
        let mut matrix = Matrix::new(cfg.capacity)?.with_retry_budget(cfg.retry_budget);
        if cfg.trace {
            matrix = matrix.with_trace();
        }
        let mut ch = Self {
            matrix,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            server,
            protocol,
            to_server: VecDeque::new(),
            to_client: VecDeque::new(),
            last_reply_due: 0,
            last_arrival: 0,
            last_activity: 0,
            state: LinkState::Connected,
            scheduled_wake: None,
            handshake: None,
            stats: SimChannelStats::default(),
            completions: Vec::new(),
        };
        ch.start_handshake();
        Ok(ch)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn stats(&self) -> SimChannelStats {
        self.stats
    }

    pub fn rtt(&self) -> SimTime {
        2 * self.cfg.link.one_way_us()
    }

    fn start_handshake(&mut self) {
        if !self.cfg.handshake {
            return;
        }
        if let Some(t) = self.protocol.handshake() {
            self.handshake = Some(self.matrix.submit_front(t, u64::MAX));
        }
    }

    pub fn submit(&mut self, now: SimTime, template: RequestTemplate, tag: u64) -> RequestId {
        if self.state == LinkState::Connected
            && self.matrix.is_idle()
            && self.to_client.is_empty()
            && now.saturating_sub(self.last_activity) >= self.cfg.idle_timeout
        {
            // the server closed the idle connection; reconnect first
            self.reconnect(now);
        }
        let id = self.matrix.submit(template, tag);
        self.pump(now);
        id
    }

    fn reconnect(&mut self, now: SimTime) {
        self.stats.reconnects += 1;
        self.to_server.clear();
        self.to_client.clear();
        self.server.reset();
        self.state = LinkState::Connecting {
            ready_at: now + self.rtt(),
        };
        self.start_handshake();
    }

    fn pump(&mut self, now: SimTime) {
        if let LinkState::Connecting { ready_at } = self.state {
            if now < ready_at {
                self.collect();
                return;
            }
            self.state = LinkState::Connected;
        }
        while let Some(s) = self.matrix.next_send() {
            self.stats.commands_sent += 1;
            let arrive = (now + self.cfg.link.sample_us(&mut self.rng)).max(self.last_arrival);
            self.last_arrival = arrive;
            self.to_server.push_back((arrive, s.line));
            self.last_activity = now;
        }
        self.collect();
    }

    fn collect(&mut self) {
        for c in self.matrix.take_completions() {
            if Some(c.id) == self.handshake {
                self.handshake = None;
                if !matches!(c.outcome, super::Outcome::Success) {
                    self.matrix
                        .fail_all(FailReason::Connection(format!("handshake failed: {:?}", c.outcome)));
                }
                continue;
            }
            self.completions.push(c);
        }
        for c in self.matrix.take_completions() {
            self.completions.push(c);
        }
    }

    /// Processes everything due at or before `now`.
    pub fn advance(&mut self, now: SimTime) {
        if self.scheduled_wake.is_some_and(|t| t <= now) {
            self.scheduled_wake = None;
        }
        while self.to_server.front().is_some_and(|(t, _)| *t <= now) {
            let (arrive, line) = self.to_server.pop_front().unwrap();
            let lines = self.server.handle(line.trim_end());
            let back = self.cfg.link.sample_us(&mut self.rng);
            let due = (arrive + self.cfg.service_time + back).max(self.last_reply_due);
            self.last_reply_due = due;
            self.to_client.push_back((due, lines));
        }
        while self.to_client.front().is_some_and(|(t, _)| *t <= now) {
            let (_, lines) = self.to_client.pop_front().unwrap();
            self.stats.reply_batches += 1;
            self.last_activity = now;
            let mut broken = false;
            for l in &lines {
                if self.matrix.on_line(l).is_err() {
                    broken = true;
                    break;
                }
            }
            if broken {
                self.stats.desyncs += 1;
                self.matrix.on_disconnect();
                self.reconnect(now);
                break;
            }
        }
        self.pump(now);
    }

    /// Earliest time anything is due, ignoring already scheduled wakes.
    pub fn next_due(&self) -> Option<SimTime> {
        let conn = match self.state {
            LinkState::Connecting { ready_at } => Some(ready_at),
            LinkState::Connected => None,
        };
        [
            self.to_server.front().map(|e| e.0),
            self.to_client.front().map(|e| e.0),
            conn,
        ]
        .into_iter()
        .flatten()
        .min()
    }

    /// A wake-up the owner has to schedule, if one earlier than any
    /// pending wake is needed.
    pub fn wake_needed(&mut self) -> Option<SimTime> {
        let due = self.next_due()?;
        if self.scheduled_wake.is_some_and(|s| s <= due) {
            return None;
        }
        self.scheduled_wake = Some(due);
        Some(due)
    }

    pub fn take_completions(&mut self) -> Vec<Completion> {
        std::mem::take(&mut self.completions)
    }

    pub fn is_idle(&self) -> bool {
        self.matrix.is_idle() && self.to_client.is_empty() && self.to_server.is_empty()
    }

    /// Runs the channel alone until every submitted request has finished.
    pub fn run_to_idle(&mut self, mut now: SimTime) -> SimTime {
        while let Some(t) = self.next_due() {
            now = now.max(t);
            self.advance(now);
        }
        now
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::ResourcePath;
    use crate::remote::DirectoryTree;
    use crate::transfer::{MetaOp, Outcome, SmpProtocol};
    use parking_lot::RwLock;

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    fn channel(capacity: usize, rtt_ms: f64) -> (SimChannel, Arc<SmpService>) {
        let mut t = DirectoryTree::new();
        let mut cur = ResourcePath::root();
        for i in 0..9 {
            cur = cur.join(&format!("d{i}")).unwrap();
            t.mkdir(&cur, 0).unwrap();
        }
        for i in 0..200 {
            t.create(&p(&format!("/f{i}")), i, 0).unwrap();
        }
        let svc = Arc::new(SmpService::new(Arc::new(RwLock::new(t))));
        let cfg = SimChannelConfig {
            link: LatencyModel::from_rtt(rtt_ms),
            capacity,
            ..Default::default()
        };
        let ch = SimChannel::new(
            cfg,
            Arc::new(SmpProtocol::default()),
            Box::new(SmpEndpoint::new(svc.clone())),
            7,
        )
        .unwrap();
        (ch, svc)
    }

    #[test]
    fn independent_three_commands_take_one_rtt() {
        let (mut ch, _) = channel(5, 50.0);
        let proto = SmpProtocol::default();
        ch.submit(0, proto.template(&MetaOp::StatMany(vec![p("/f1"), p("/f2"), p("/f3")])), 0);
        let end = ch.run_to_idle(0);
        assert!(end >= ms(50.0) && end < ms(100.0), "{end}");
        assert_eq!(ch.take_completions()[0].outcome, Outcome::Success);
    }

    #[test]
    fn dependent_chain_takes_one_rtt_per_step() {
        let (mut ch, _) = channel(5, 50.0);
        let proto = SmpProtocol::default();
        ch.submit(0, proto.template(&MetaOp::Walk(p("/d0/d1"))), 0);
        let end = ch.run_to_idle(0);
        assert_eq!(end, ms(150.0));
    }

    #[test]
    fn transient_fault_is_retried() {
        let (mut ch, svc) = channel(5, 10.0);
        svc.inject_transient(p("/f9"), 1);
        ch.submit(0, SmpProtocol::default().template(&MetaOp::List(p("/f9"))), 3);
        ch.run_to_idle(0);
        let c = ch.take_completions();
        assert_eq!(c[0].outcome, Outcome::Success);
        assert_eq!(c[0].retries, 1);
        assert_eq!(c[0].tag, 3);
    }

    #[test]
    fn idle_connection_costs_a_reconnect() {
        let (mut ch, _) = channel(5, 10.0);
        let proto = SmpProtocol::default();
        ch.submit(0, proto.template(&MetaOp::Stat(p("/f1"))), 0);
        let t = ch.run_to_idle(0);
        let start = t + ms(60_000.0);
        ch.submit(start, proto.template(&MetaOp::Stat(p("/f1"))), 0);
        let end = ch.run_to_idle(start);
        assert_eq!(end - start, ms(20.0));
        assert_eq!(ch.stats().reconnects, 1);
    }

    /// Adds one stray line to its first reply.
    #[derive(Default)]
    struct Chatty {
        done: bool,
    }

    impl LineServer for Chatty {
        fn handle(&mut self, _: &str) -> Vec<String> {
            let mut r = vec!["213 f\t1\t1\t/x".to_string()];
            if !std::mem::replace(&mut self.done, true) {
                r.push("200 unsolicited".into());
            }
            r
        }
    }

    #[test]
    fn desync_drops_connection() {
        let cfg = SimChannelConfig {
            link: LatencyModel::from_rtt(10.0),
            ..Default::default()
        };
        let mut ch = SimChannel::new(cfg, Arc::new(SmpProtocol::default()), Box::new(Chatty::default()), 1).unwrap();
        ch.submit(0, SmpProtocol::default().template(&MetaOp::Stat(p("/x"))), 0);
        ch.advance(ms(5.0));
        ch.advance(ms(10.0));
        assert_eq!(ch.stats().desyncs, 1);
        assert_eq!(ch.take_completions().len(), 1);
        // the next request waits for the new connection
        ch.submit(ms(10.0), SmpProtocol::default().template(&MetaOp::Stat(p("/x"))), 1);
        let end = ch.run_to_idle(ms(10.0));
        assert_eq!(end, ms(30.0));
    }
}
