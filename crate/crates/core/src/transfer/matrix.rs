//! Matrix ordering of sends and parses over one connection.
//!
//! Every in-flight request occupies a column. Commands go out round-robin
//! over the columns; replies come back in send order on the connection, so
//! each reply line is handed to the parser of the oldest sent-but-unparsed
//! command. A fresh request enters the left-most column and its first
//! command is sent ahead of the rotation. A dependent request whose parser
//! finishes sends its next command right away and moves to the right-most
//! column.

use std::collections::{HashMap, VecDeque};

use super::request::{Failing, Request};
use super::{Completion, FailReason, Outcome, ParseOutcome, ParseStep, RequestId, RequestTemplate, TransferError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendItem {
    pub request: RequestId,
    pub index: usize,
    pub line: String,
}

/// Recorded `(request, pair index)` events, in order.
#[derive(Debug, Default, Clone)]
pub struct MatrixTrace {
    pub sends: Vec<(RequestId, usize)>,
    pub parses: Vec<(RequestId, usize)>,
}

#[derive(Debug)]
pub struct Matrix {
    capacity: usize,
    retry_budget: u32,
    columns: Vec<RequestId>,
    reqs: HashMap<RequestId, Request>,
    pending: VecDeque<RequestId>,
    immediate: VecDeque<RequestId>,
    awaiting: VecDeque<(RequestId, usize)>,
    rr: usize,
    next_id: RequestId,
    completions: Vec<Completion>,
    trace: Option<MatrixTrace>,
    peak_in_flight: usize,
}

pub const DEFAULT_RETRY_BUDGET: u32 = 2;

impl Matrix {
    pub fn new(capacity: usize) -> Result<Self, TransferError> {
        if capacity == 0 {
            return Err(TransferError::InvalidCapacity);
        }
        Ok(Self {
            capacity,
            retry_budget: DEFAULT_RETRY_BUDGET,
            columns: Vec::with_capacity(capacity),
            reqs: HashMap::new(),
            pending: VecDeque::new(),
            immediate: VecDeque::new(),
            awaiting: VecDeque::new(),
            rr: 0,
            next_id: 1,
            completions: Vec::new(),
            trace: None,
            peak_in_flight: 0,
        })
    }

    pub fn with_retry_budget(mut self, budget: u32) -> Self {
        self.retry_budget = budget;
        self
    }

    /// Starts recording send and parse events.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(MatrixTrace::default());
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn trace(&self) -> Option<&MatrixTrace> {
        self.trace.as_ref()
    }

    pub fn in_flight(&self) -> usize {
        self.columns.len()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight
    }

    pub fn queued(&self) -> usize {
        self.pending.len()
    }

    /// Sent commands still waiting for their replies.
    pub fn awaiting_replies(&self) -> usize {
        self.awaiting.len()
    }

    pub fn is_idle(&self) -> bool {
        self.columns.is_empty() && self.pending.is_empty()
    }

    /// Request ids in column order, left to right.
    pub fn columns(&self) -> &[RequestId] {
        &self.columns
    }

    pub fn submit(&mut self, template: RequestTemplate, tag: u64) -> RequestId {
        self.enqueue(template, tag, false)
    }

    /// Queues ahead of everything not yet admitted (connection handshakes).
    pub fn submit_front(&mut self, template: RequestTemplate, tag: u64) -> RequestId {
        self.enqueue(template, tag, true)
    }

    fn enqueue(&mut self, template: RequestTemplate, tag: u64, front: bool) -> RequestId {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request::new(tag, template);
        if req.pairs.is_empty() {
            self.completions.push(Completion {
                id,
                tag,
                outcome: Outcome::Failed(FailReason::EmptyRequest),
                space: req.space,
                retries: 0,
            });
            return id;
        }
        self.reqs.insert(id, req);
        if front {
            // admitted requests that have sent nothing yet step back so the
            // handshake is the first command on the connection
            let unsent: Vec<RequestId> = self
                .columns
                .iter()
                .copied()
                .filter(|c| self.reqs[c].sent == 0)
                .collect();
            self.columns.retain(|c| !unsent.contains(c));
            self.immediate.retain(|c| !unsent.contains(c));
            for c in unsent {
                self.pending.push_front(c);
            }
            if self.columns.is_empty() {
                self.rr = 0;
            }
            self.pending.push_front(id);
        } else {
            self.pending.push_back(id);
        }
        self.admit();
        id
    }

    fn admit(&mut self) {
        while self.columns.len() < self.capacity {
            let Some(id) = self.pending.pop_front() else { break };
            if !self.columns.is_empty() {
                self.rr += 1;
            }
            self.columns.insert(0, id);
            self.immediate.push_back(id);
        }
        self.peak_in_flight = self.peak_in_flight.max(self.columns.len());
    }

    /// The next command to write, if any column has one ready.
    pub fn next_send(&mut self) -> Option<SendItem> {
        while let Some(id) = self.immediate.pop_front() {
            if self.reqs.get(&id).is_some_and(Request::sendable) {
                return Some(self.send(id));
            }
        }
        let n = self.columns.len();
        for k in 0..n {
            let col = (self.rr + k) % n;
            let id = self.columns[col];
            if self.reqs[&id].sendable() {
                self.rr = col + 1;
                return Some(self.send(id));
            }
        }
        None
    }

    /// Drains every command that is ready now.
    pub fn drain_sends(&mut self) -> Vec<SendItem> {
        std::iter::from_fn(|| self.next_send()).collect()
    }

    fn send(&mut self, id: RequestId) -> SendItem {
        let req = self.reqs.get_mut(&id).expect("live request");
        let index = req.sent;
        req.sent += 1;
        self.awaiting.push_back((id, index));
        if let Some(t) = self.trace.as_mut() {
            t.sends.push((id, index));
        }
        SendItem {
            request: id,
            index,
            line: req.pairs[index].command.wire(),
        }
    }

    /// Routes one reply line. An unexpected line is a desync; the caller
    /// must drop the connection and call [`Matrix::on_disconnect`].
    pub fn on_line(&mut self, line: &str) -> Result<(), TransferError> {
        let Some(&(id, index)) = self.awaiting.front() else {
            return Err(TransferError::Desync(line.to_string()));
        };
        let req = self.reqs.get_mut(&id).expect("awaited request is live");
        debug_assert_eq!(req.cursor, index);
        let outcome = match req.pairs[index].parser.feed(line, &mut req.space) {
            ParseStep::NeedMore => return Ok(()),
            ParseStep::Done(o) => o,
        };
        self.awaiting.pop_front();
        req.cursor += 1;
        if let Some(t) = self.trace.as_mut() {
            t.parses.push((id, index));
        }
        if req.failing.is_none() {
            match outcome {
                ParseOutcome::Success(next) => {
                    if let Some(p) = next {
                        req.pairs.push(p);
                    }
                    if req.cursor == req.pairs.len() {
                        self.finish(id, Outcome::Success);
                        return Ok(());
                    }
                    if req.dependent() {
                        self.remove_column(id);
                        self.columns.push(id);
                        self.immediate.push_back(id);
                    }
                }
                ParseOutcome::ProtocolFailure { code, message } => {
                    req.failing = Some(if (400..500).contains(&code) {
                        Failing::Transient { code, message }
                    } else {
                        Failing::Final(Outcome::Failed(FailReason::Protocol { code, message }))
                    });
                }
                ParseOutcome::Deleted => req.failing = Some(Failing::Final(Outcome::Deleted)),
            }
        }
        let req = &self.reqs[&id];
        if req.failing.is_some() && req.outstanding() == 0 {
            self.settle_failing(id);
        }
        Ok(())
    }

    fn remove_column(&mut self, id: RequestId) {
        if let Some(pos) = self.columns.iter().position(|&c| c == id) {
            self.columns.remove(pos);
            if pos < self.rr {
                self.rr -= 1;
            }
            if self.rr >= self.columns.len() {
                self.rr = 0;
            }
        }
    }

    fn finish(&mut self, id: RequestId, outcome: Outcome) {
        self.remove_column(id);
        let req = self.reqs.remove(&id).expect("live request");
        self.completions.push(Completion {
            id,
            tag: req.tag,
            outcome,
            space: req.space,
            retries: req.retries,
        });
        self.admit();
    }

    fn settle_failing(&mut self, id: RequestId) {
        let req = self.reqs.get_mut(&id).expect("live request");
        match req.failing.take().expect("failing request") {
            Failing::Transient { code, message } => {
                if req.retries < self.retry_budget {
                    req.retries += 1;
                    req.rebuild();
                    self.remove_column(id);
                    self.pending.push_back(id);
                    self.admit();
                } else {
                    self.finish(id, Outcome::Failed(FailReason::RetriesExhausted { code, message }));
                }
            }
            Failing::Final(o) => self.finish(id, o),
        }
    }

    /// The connection is gone. In-flight requests go back to the front of
    /// the queue in column order and restart from their first command.
    pub fn on_disconnect(&mut self) {
        self.awaiting.clear();
        self.immediate.clear();
        self.rr = 0;
        let cols = std::mem::take(&mut self.columns);
        let mut requeue = Vec::with_capacity(cols.len());
        for id in cols {
            let req = self.reqs.get_mut(&id).expect("live request");
            match req.failing.take() {
                Some(Failing::Final(o)) => {
                    let req = self.reqs.remove(&id).unwrap();
                    self.completions.push(Completion {
                        id,
                        tag: req.tag,
                        outcome: o,
                        space: req.space,
                        retries: req.retries,
                    });
                }
                Some(Failing::Transient { .. }) => {
                    req.retries += 1;
                    req.rebuild();
                    requeue.push(id);
                }
                None => {
                    req.rebuild();
                    requeue.push(id);
                }
            }
        }
        for id in requeue.into_iter().rev() {
            self.pending.push_front(id);
        }
        self.admit();
    }

    /// Fails every queued and in-flight request.
    pub fn fail_all(&mut self, reason: FailReason) {
        self.awaiting.clear();
        self.immediate.clear();
        self.rr = 0;
        let ids: Vec<RequestId> = self.columns.drain(..).chain(self.pending.drain(..)).collect();
        for id in ids {
            let req = self.reqs.remove(&id).expect("live request");
            self.completions.push(Completion {
                id,
                tag: req.tag,
                outcome: Outcome::Failed(reason.clone()),
                space: req.space,
                retries: req.retries,
            });
        }
    }

    pub fn take_completions(&mut self) -> Vec<Completion> {
        std::mem::take(&mut self.completions)
    }
}
