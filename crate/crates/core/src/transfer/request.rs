use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::meta::{EntryKind, MetadataRecord, ResourcePath};

use super::Command;

/// Scratch space shared by all parsers of one request.
#[derive(Debug, Default, Clone)]
pub struct SharedSpace {
    pub records: Vec<MetadataRecord>,
    pub stats: Vec<StatEntry>,
    pub vars: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatEntry {
    pub path: ResourcePath,
    pub kind: EntryKind,
    pub mtime: u64,
    pub size_bytes: u64,
}

#[derive(Debug)]
pub enum ParseOutcome {
    /// Optionally appends one more pair to the request's chain.
    Success(Option<Pair>),
    ProtocolFailure { code: u16, message: String },
    Deleted,
}

#[derive(Debug)]
pub enum ParseStep {
    NeedMore,
    Done(ParseOutcome),
}

/// Resumable reply consumer for one command. Fed one reply line at a time.
pub trait Parser: Send + fmt::Debug {
    fn feed(&mut self, line: &str, space: &mut SharedSpace) -> ParseStep;
}

#[derive(Debug)]
pub struct Pair {
    pub command: Command,
    pub parser: Box<dyn Parser>,
}

impl Pair {
    pub fn new(command: Command, parser: impl Parser + 'static) -> Self {
        Self {
            command,
            parser: Box::new(parser),
        }
    }
}

type ChainBuilder = dyn Fn() -> Vec<Pair> + Send + Sync;

/// Recipe for a request. Retransmission rebuilds the chain from it.
#[derive(Clone)]
pub struct RequestTemplate {
    dependent: bool,
    build: Arc<ChainBuilder>,
}

impl fmt::Debug for RequestTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RequestTemplate")
            .field("dependent", &self.dependent)
            .finish_non_exhaustive()
    }
}

impl RequestTemplate {
    pub fn new(dependent: bool, build: impl Fn() -> Vec<Pair> + Send + Sync + 'static) -> Self {
        Self {
            dependent,
            build: Arc::new(build),
        }
    }

    pub fn dependent(&self) -> bool {
        self.dependent
    }

    pub fn build(&self) -> Vec<Pair> {
        (self.build)()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailReason {
    Protocol { code: u16, message: String },
    RetriesExhausted { code: u16, message: String },
    Connection(String),
    EmptyRequest,
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailReason::Protocol { code, message } => write!(f, "{code} {message}"),
            FailReason::RetriesExhausted { code, message } => {
                write!(f, "retries exhausted, last reply {code} {message}")
            }
            FailReason::Connection(m) => write!(f, "connection: {m}"),
            FailReason::EmptyRequest => f.write_str("request has no commands"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Pending,
    Success,
    Failed(FailReason),
    Deleted,
}

impl Outcome {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Outcome::Pending)
    }
}

pub type RequestId = u64;

/// Terminal report for one request.
#[derive(Debug, Clone)]
pub struct Completion {
    pub id: RequestId,
    pub tag: u64,
    pub outcome: Outcome,
    pub space: SharedSpace,
    pub retries: u32,
}

#[derive(Debug)]
pub(crate) enum Failing {
    Transient { code: u16, message: String },
    Final(Outcome),
}

#[derive(Debug)]
pub(crate) struct Request {
    pub(crate) tag: u64,
    pub(crate) template: RequestTemplate,
    pub(crate) pairs: Vec<Pair>,
    pub(crate) cursor: usize,
    pub(crate) sent: usize,
    pub(crate) space: SharedSpace,
    pub(crate) retries: u32,
    pub(crate) failing: Option<Failing>,
}

impl Request {
    pub(crate) fn new(tag: u64, template: RequestTemplate) -> Self {
        let pairs = template.build();
        Self {
            tag,
            template,
            pairs,
            cursor: 0,
            sent: 0,
            space: SharedSpace::default(),
            retries: 0,
            failing: None,
        }
    }

    pub(crate) fn dependent(&self) -> bool {
        self.template.dependent()
    }

    /// Whether the next unsent command may go out now.
    pub(crate) fn sendable(&self) -> bool {
        self.failing.is_none()
            && self.sent < self.pairs.len()
            && (!self.dependent() || self.cursor == self.sent)
    }

    pub(crate) fn outstanding(&self) -> usize {
        self.sent - self.cursor
    }

    pub(crate) fn rebuild(&mut self) {
        self.pairs = self.template.build();
        self.cursor = 0;
        self.sent = 0;
        self.space = SharedSpace::default();
        self.failing = None;
    }
}
