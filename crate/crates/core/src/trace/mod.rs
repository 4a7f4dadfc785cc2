//! Access traces: parsing, synthetic generation, statistics and tree
//! reconstruction.
//!
//! Two line formats are read. The native one is tab separated:
//!
//! ```text
//! timestamp_ms <TAB> op <TAB> path [<TAB> path2] [<TAB> user,process,host]
//! ```
//!
//! HDFS audit lines (`... ugi=u ip=/h cmd=listStatus src=/p dst=null ...`)
//! are recognised by their `cmd=` field.

mod generate;
mod parse;
mod reconstruct;
mod stats;

use std::fmt;
use std::str::FromStr;

use crate::meta::ResourcePath;
use crate::predict::Attributes;
use crate::remote::Mutation;

pub use generate::{generate, generate_pair, GeneratedTrace, GeneratorSpec, GeneratorTallies};
pub use parse::{format_tsv, open_trace, read_trace, write_tsv, ReadCounts, TraceReader};
pub use reconstruct::{initial_tree, reconstruct_tree, ReconstructStats};
pub use stats::{compute_stats, TraceStats};

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("{malformed} of {lines} lines malformed; first: {samples:?}")]
    TooManyMalformed {
        malformed: u64,
        lines: u64,
        samples: Vec<String>,
    },
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TraceOp {
    ListStatus,
    Open,
    GetFileInfo,
    Mkdir,
    Create,
    Rename,
    Delete,
    SetPermission,
    Other(String),
}

impl TraceOp {
    pub fn as_str(&self) -> &str {
        match self {
            TraceOp::ListStatus => "listStatus",
            TraceOp::Open => "open",
            TraceOp::GetFileInfo => "getfileinfo",
            TraceOp::Mkdir => "mkdirs",
            TraceOp::Create => "create",
            TraceOp::Rename => "rename",
            TraceOp::Delete => "delete",
            TraceOp::SetPermission => "setPermission",
            TraceOp::Other(s) => s,
        }
    }

    /// Operations that change the shape of the tree.
    pub fn is_write(&self) -> bool {
        matches!(self, TraceOp::Mkdir | TraceOp::Create | TraceOp::Rename | TraceOp::Delete)
    }
}

impl fmt::Display for TraceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.is_empty() || s.chars().any(char::is_whitespace) {
            return Err(format!("bad op `{s}`"));
        }
        Ok(match s.to_ascii_lowercase().as_str() {
            "liststatus" | "ls" | "list" => TraceOp::ListStatus,
            "open" => TraceOp::Open,
            "getfileinfo" | "stat" => TraceOp::GetFileInfo,
            "mkdirs" | "mkdir" => TraceOp::Mkdir,
            "create" => TraceOp::Create,
            "rename" => TraceOp::Rename,
            "delete" => TraceOp::Delete,
            "setpermission" => TraceOp::SetPermission,
            _ => TraceOp::Other(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub timestamp_ms: u64,
    pub op: TraceOp,
    pub path: ResourcePath,
    /// Rename destination.
    pub path2: Option<ResourcePath>,
    pub attributes: Attributes,
}

impl TraceEvent {
    pub fn new(timestamp_ms: u64, op: TraceOp, path: ResourcePath) -> Self {
        Self {
            timestamp_ms,
            op,
            path,
            path2: None,
            attributes: Attributes::default(),
        }
    }

    pub fn is_list(&self) -> bool {
        self.op == TraceOp::ListStatus
    }

    /// The tree change this event describes, if it is a write.
    pub fn mutation(&self) -> Option<Mutation> {
        Some(match self.op {
            TraceOp::Mkdir => Mutation::Mkdir(self.path.clone()),
            TraceOp::Create => Mutation::Create {
                path: self.path.clone(),
                size_bytes: 0,
            },
            TraceOp::Rename => Mutation::Rename {
                from: self.path.clone(),
                to: self.path2.clone()?,
            },
            TraceOp::Delete => Mutation::Delete(self.path.clone()),
            _ => return None,
        })
    }
}
