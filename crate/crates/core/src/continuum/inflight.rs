use std::collections::HashMap;

use super::{PrefetchRequest, RequestIdentity};

/// Result of registering interest in a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Join {
    /// First request for this identity; the caller sends it with `ctx`.
    New { ctx: u64 },
    /// Coalesced with an in-flight request. `raised` is set when the
    /// joiner outranks it and the pending priority went up.
    Joined { ctx: u64, raised: Option<i32> },
}

#[derive(Debug)]
struct Entry<W> {
    ctx: u64,
    request: PrefetchRequest,
    waiters: Vec<W>,
}

/// Single-owner dedup map from request identity to the waiters of its one
/// upstream fetch.
#[derive(Debug)]
pub struct InflightTable<W> {
    by_id: HashMap<RequestIdentity, Entry<W>>,
    by_ctx: HashMap<u64, RequestIdentity>,
    next_ctx: u64,
    sends: u64,
    joins: u64,
}

impl<W> Default for InflightTable<W> {
    fn default() -> Self {
        Self {
            by_id: HashMap::new(),
            by_ctx: HashMap::new(),
            next_ctx: 1,
            sends: 0,
            joins: 0,
        }
    }
}

impl<W> InflightTable<W> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn join(&mut self, request: &PrefetchRequest, waiter: W) -> Join {
        let id = request.identity();
        if let Some(e) = self.by_id.get_mut(&id) {
            self.joins += 1;
            e.waiters.push(waiter);
            let raised = (request.priority > e.request.priority).then(|| {
                e.request.priority = request.priority;
                request.priority
            });
            return Join::Joined { ctx: e.ctx, raised };
        }
        let ctx = self.next_ctx;
        self.next_ctx += 1;
        self.sends += 1;
        self.by_ctx.insert(ctx, id.clone());
        self.by_id.insert(
            id,
            Entry {
                ctx,
                request: request.clone(),
                waiters: vec![waiter],
            },
        );
        Join::New { ctx }
    }

    /// Raises the priority of a pending identity. Returns the context when
    /// something changed.
    pub fn raise(&mut self, id: &RequestIdentity, priority: i32) -> Option<u64> {
        let e = self.by_id.get_mut(id)?;
        if priority <= e.request.priority {
            return None;
        }
        e.request.priority = priority;
        Some(e.ctx)
    }

    pub fn contains(&self, id: &RequestIdentity) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn request(&self, ctx: u64) -> Option<&PrefetchRequest> {
        self.by_ctx.get(&ctx).and_then(|id| self.by_id.get(id)).map(|e| &e.request)
    }

    /// Removes the entry for `ctx`, handing back its request and waiters.
    pub fn complete(&mut self, ctx: u64) -> Option<(PrefetchRequest, Vec<W>)> {
        let id = self.by_ctx.remove(&ctx)?;
        let e = self.by_id.remove(&id)?;
        Some((e.request, e.waiters))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Upstream sends so far.
    pub fn sends(&self) -> u64 {
        self.sends
    }

    /// Requests coalesced into an in-flight one so far.
    pub fn joins(&self) -> u64 {
        self.joins
    }
}
