use crate::meta::{MetadataRecord, ResourcePath};
use crate::predict::Fanout;

/// Why a request exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Demand,
    Predictor,
    TtlExpansion,
    DeleteResync,
}

impl Origin {
    pub fn code(self) -> u8 {
        match self {
            Origin::Demand => 0,
            Origin::Predictor => 1,
            Origin::TtlExpansion => 2,
            Origin::DeleteResync => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Origin::Demand,
            1 => Origin::Predictor,
            2 => Origin::TtlExpansion,
            3 => Origin::DeleteResync,
            _ => return None,
        })
    }
}

pub const PRIORITY_DEMAND: i32 = 1000;
pub const PRIORITY_RESYNC: i32 = 900;
pub const PRIORITY_PREFETCH: i32 = 500;

/// Two requests with the same identity are served by one upstream fetch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestIdentity {
    pub path: ResourcePath,
    pub force_refresh: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefetchRequest {
    pub path: ResourcePath,
    /// Higher is served first.
    pub priority: i32,
    pub ttl: u32,
    pub force_refresh: bool,
    pub origin: Origin,
    pub fanout: Option<Fanout>,
}

impl PrefetchRequest {
    pub fn demand(path: ResourcePath) -> Self {
        Self {
            path,
            priority: PRIORITY_DEMAND,
            ttl: 0,
            force_refresh: false,
            origin: Origin::Demand,
            fanout: None,
        }
    }

    pub fn prefetch(path: ResourcePath, ttl: u32) -> Self {
        Self {
            path,
            priority: PRIORITY_PREFETCH,
            ttl,
            force_refresh: false,
            origin: Origin::Predictor,
            fanout: None,
        }
    }

    pub fn refresh(mut self) -> Self {
        self.force_refresh = true;
        self
    }

    pub fn identity(&self) -> RequestIdentity {
        RequestIdentity {
            path: self.path.clone(),
            force_refresh: self.force_refresh,
        }
    }

    pub fn is_demand(&self) -> bool {
        self.origin == Origin::Demand
    }

    /// A request for `path` one layer below this one: one less TTL and a
    /// strictly lower priority.
    pub fn child(&self, path: ResourcePath) -> Self {
        Self {
            path,
            priority: self.priority - 1,
            ttl: self.ttl.saturating_sub(1),
            force_refresh: false,
            origin: Origin::TtlExpansion,
            fanout: None,
        }
    }
}

/// What a fetch produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchResult {
    Record(MetadataRecord),
    /// The remote reported the path missing.
    Deleted,
    Failed(String),
}

impl FetchResult {
    pub fn record(&self) -> Option<&MetadataRecord> {
        match self {
            FetchResult::Record(r) => Some(r),
            _ => None,
        }
    }
}
