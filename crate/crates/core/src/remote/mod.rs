//! The remote I/O endpoint: a mutable directory tree, the SMP line protocol
//! that serves it, a TCP server, and the link latency model.

mod latency;
mod server;
pub mod smp;
mod tree;

pub use latency::LatencyModel;
pub use server::{ServerOptions, SmpServer};
pub use smp::{Session, SmpService};
pub use tree::{DirectoryTree, Mutation, TreeEvent};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("no such file or directory: {0}")]
    NotFound(String),
    #[error("already exists: {0}")]
    AlreadyExists(String),
    #[error("invalid mutation: {0}")]
    InvalidMutation(String),
    #[error("bad snapshot {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
