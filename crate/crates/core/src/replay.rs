//! Trace replay over a simulated continuum.
//!
//! `listStatus` events become demand reads (on a file they behave like a
//! stat, since the remote answers a listing of a file with its own
//! attributes). Writes go straight to the remote tree at their timestamp.
//! Other operations only shape the initial namespace. Every replay starts
//! from a fresh world and a fresh copy of the initial tree.

use std::sync::Arc;

use parking_lot::RwLock;

use crate::continuum::{ClientOp, ReplayReport, TimedOp, World, WorldConfig};
use crate::predict::{NGramModel, PredictError};
use crate::remote::SmpService;
use crate::sim::ms;
use crate::trace::{initial_tree, TraceEvent};

/// Client operations for `events`, timed relative to the first event.
pub fn trace_ops(events: &[TraceEvent]) -> Vec<TimedOp> {
    let Some(t0) = events.first().map(|e| e.timestamp_ms) else {
        return Vec::new();
    };
    events
        .iter()
        .filter_map(|e| {
            let at = ms(e.timestamp_ms.saturating_sub(t0) as f64);
            if e.is_list() {
                Some(TimedOp {
                    at,
                    op: ClientOp::Read {
                        path: e.path.clone(),
                        attributes: e.attributes.clone(),
                        force_refresh: false,
                    },
                })
            } else {
                e.mutation().map(|m| TimedOp::write(at, m))
            }
        })
        .collect()
}

/// A remote endpoint serving the namespace as it stood before `events`.
/// Pass several traces chained to cover a namespace that outlives any one
/// of them.
pub fn remote_for<'a>(events: impl IntoIterator<Item = &'a TraceEvent>) -> Arc<SmpService> {
    Arc::new(SmpService::new(Arc::new(RwLock::new(initial_tree(events)))))
}

/// Trigram model over the listing sequence of a training trace.
pub fn train_amp(events: &[TraceEvent]) -> NGramModel {
    NGramModel::train(events.iter().filter(|e| e.is_list()).map(|e| &e.path))
}

pub fn replay_trace(
    cfg: &WorldConfig,
    events: &[TraceEvent],
    amp_model: Option<Arc<NGramModel>>,
    seed: u64,
) -> Result<ReplayReport, PredictError> {
    replay_on(cfg, remote_for(events), events, amp_model, seed)
}

/// Replays `events` against a given remote endpoint.
pub fn replay_on(
    cfg: &WorldConfig,
    remote: Arc<SmpService>,
    events: &[TraceEvent],
    amp_model: Option<Arc<NGramModel>>,
    seed: u64,
) -> Result<ReplayReport, PredictError> {
    let mut world = World::new(cfg, remote, amp_model, seed)?;
    Ok(world.replay(trace_ops(events)))
}
