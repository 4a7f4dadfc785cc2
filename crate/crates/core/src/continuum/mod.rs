//! Layered edge, fog and cloud nodes over the remote I/O node.
//!
//! A node answers from its cache when it can and otherwise forwards one
//! coalesced request upstream. Predictors turn accesses into prefetch
//! requests; directories fetched with a TTL expand into lower-priority
//! child requests. When the remote reports a cached path missing, the
//! top node walks up the tree marking cached metadata deleted and
//! resynchronising the nearest live ancestor.

mod frame;
mod inflight;
mod pool;
mod queue;
mod request;
mod world;

pub use frame::{FrameError, RequestFrame, ResponseFrame};
pub use inflight::{InflightTable, Join};
pub use pool::{JobId, PoolCompletion, PoolConfig, PoolStats, ServicePool};
pub use queue::{QueueStats, Ticket, WaitNotifyQueue};
pub use request::{
    FetchResult, Origin, PrefetchRequest, RequestIdentity, PRIORITY_DEMAND, PRIORITY_PREFETCH, PRIORITY_RESYNC,
};
pub use world::{
    ClientOp, DemandOutcome, Delivery, LatencySummary, LayerConfig, NodeCounters, NodeReport, ReplayReport, Role,
    TimedOp, World, WorldConfig,
};
