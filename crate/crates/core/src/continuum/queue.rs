//! Thread-safe wait-and-notify queue.
//!
//! Worker threads submit requests; the first submitter of an identity wins
//! a conditional insert into the pending map and its frame goes out, later
//! submitters of the same identity attach to the pending slot. A receiver
//! thread decodes response frames, looks up the context and wakes every
//! waiter of that slot. Responses may arrive in any order.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{Receiver, Sender};
use dashmap::mapref::entry::Entry;
use dashmap::DashMap;
use parking_lot::{Condvar, Mutex};

use super::{FetchResult, PrefetchRequest, RequestFrame, RequestIdentity, ResponseFrame};

type Hook = Box<dyn FnOnce(&FetchResult) + Send>;

#[derive(Default)]
struct SlotState {
    result: Option<FetchResult>,
    hooks: Vec<Hook>,
}

struct Slot {
    ctx: u64,
    state: Mutex<SlotState>,
    done: Condvar,
}

impl Slot {
    fn finish(&self, result: FetchResult) {
        let hooks = {
            let mut st = self.state.lock();
            if st.result.is_some() {
                return;
            }
            st.result = Some(result.clone());
            std::mem::take(&mut st.hooks)
        };
        self.done.notify_all();
        for h in hooks {
            h(&result);
        }
    }
}

/// Handle on one submission.
pub struct Ticket {
    slot: Arc<Slot>,
    sent: bool,
}

impl Ticket {
    /// Whether this submission sent the upstream frame rather than joining.
    pub fn sent(&self) -> bool {
        self.sent
    }

    pub fn ctx(&self) -> u64 {
        self.slot.ctx
    }

    pub fn wait(&self) -> FetchResult {
        let mut st = self.slot.state.lock();
        loop {
            if let Some(r) = &st.result {
                return r.clone();
            }
            self.slot.done.wait(&mut st);
        }
    }

    pub fn wait_timeout(&self, timeout: std::time::Duration) -> Option<FetchResult> {
        let deadline = std::time::Instant::now() + timeout;
        let mut st = self.slot.state.lock();
        loop {
            if let Some(r) = &st.result {
                return Some(r.clone());
            }
            if self.slot.done.wait_until(&mut st, deadline).timed_out() {
                return st.result.clone();
            }
        }
    }

    pub fn try_result(&self) -> Option<FetchResult> {
        self.slot.state.lock().result.clone()
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct QueueStats {
    pub sends: u64,
    pub joins: u64,
    pub completions: u64,
    pub stray_responses: u64,
}

pub struct WaitNotifyQueue {
    pending: DashMap<RequestIdentity, Arc<Slot>>,
    contexts: DashMap<u64, RequestIdentity>,
    next_ctx: AtomicU64,
    outbox: Sender<Vec<u8>>,
    sends: AtomicU64,
    joins: AtomicU64,
    completions: AtomicU64,
    stray: AtomicU64,
}

impl WaitNotifyQueue {
    /// Encoded request frames are written to `outbox`.
    pub fn new(outbox: Sender<Vec<u8>>) -> Arc<Self> {
        Arc::new(Self {
            pending: DashMap::new(),
            contexts: DashMap::new(),
            next_ctx: AtomicU64::new(1),
            outbox,
            sends: AtomicU64::new(0),
            joins: AtomicU64::new(0),
            completions: AtomicU64::new(0),
            stray: AtomicU64::new(0),
        })
    }

    /// Registers interest in `request` without blocking.
    pub fn submit(&self, request: &PrefetchRequest) -> Ticket {
        let id = request.identity();
        let (slot, sent) = match self.pending.entry(id.clone()) {
            Entry::Occupied(e) => (e.get().clone(), false),
            Entry::Vacant(v) => {
                let ctx = self.next_ctx.fetch_add(1, Ordering::Relaxed);
                let slot = Arc::new(Slot {
                    ctx,
                    state: Mutex::new(SlotState::default()),
                    done: Condvar::new(),
                });
                self.contexts.insert(ctx, id);
                v.insert(slot.clone());
                (slot, true)
            }
        };
        if sent {
            self.sends.fetch_add(1, Ordering::Relaxed);
            let frame = RequestFrame {
                ctx: slot.ctx,
                request: request.clone(),
            };
            if self.outbox.send(frame.encode()).is_err() {
                self.complete(ResponseFrame {
                    ctx: slot.ctx,
                    result: FetchResult::Failed("upstream closed".into()),
                });
            }
        } else {
            self.joins.fetch_add(1, Ordering::Relaxed);
        }
        Ticket { slot, sent }
    }

    /// Submits and blocks until the response arrives.
    pub fn fetch(&self, request: &PrefetchRequest) -> FetchResult {
        self.submit(request).wait()
    }

    /// Submits without waiting; `on_done` runs once the response arrives,
    /// on the receiving thread (or right away if it already has).
    pub fn submit_nowait(&self, request: &PrefetchRequest, on_done: impl FnOnce(&FetchResult) + Send + 'static) {
        let t = self.submit(request);
        let mut st = t.slot.state.lock();
        match &st.result {
            Some(r) => {
                let r = r.clone();
                drop(st);
                on_done(&r);
            }
            None => st.hooks.push(Box::new(on_done)),
        }
    }

    /// Routes one response to the waiters of its context.
    pub fn complete(&self, frame: ResponseFrame) {
        let Some((_, id)) = self.contexts.remove(&frame.ctx) else {
            self.stray.fetch_add(1, Ordering::Relaxed);
            return;
        };
        let Some((_, slot)) = self.pending.remove_if(&id, |_, s| s.ctx == frame.ctx) else {
            self.stray.fetch_add(1, Ordering::Relaxed);
            return;
        };
        self.completions.fetch_add(1, Ordering::Relaxed);
        slot.finish(frame.result);
    }

    /// Decodes and delivers response frames until `inbox` disconnects.
    pub fn spawn_receiver(self: &Arc<Self>, inbox: Receiver<Vec<u8>>) -> JoinHandle<()> {
        let q = self.clone();
        std::thread::spawn(move || {
            for bytes in inbox {
                match ResponseFrame::decode(&bytes) {
                    Ok(f) => q.complete(f),
                    Err(e) => {
                        log::warn!("dropping response: {e}");
                        q.stray.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        })
    }

    /// Fails every pending request.
    pub fn fail_all(&self, reason: &str) {
        let ctxs: Vec<u64> = self.contexts.iter().map(|e| *e.key()).collect();
        for ctx in ctxs {
            self.complete(ResponseFrame {
                ctx,
                result: FetchResult::Failed(reason.to_string()),
            });
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn stats(&self) -> QueueStats {
        QueueStats {
            sends: self.sends.load(Ordering::Relaxed),
            joins: self.joins.load(Ordering::Relaxed),
            completions: self.completions.load(Ordering::Relaxed),
            stray_responses: self.stray.load(Ordering::Relaxed),
        }
    }
}
