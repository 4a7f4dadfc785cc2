//! Prefetch predictors.
//!
//! A predictor sees every access at a node together with whether the local
//! cache served it, and answers with prefetch candidates. Candidates already
//! cached are filtered again by the caller.

mod amp;
mod dls;
mod successor;
mod window;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cache::MetaCache;
use crate::meta::{EntryKind, MetadataRecord, ResourcePath};

pub use amp::{Amp, AmpConfig, NGramModel};
pub use dls::{Dls, DlsConfig};
pub use successor::{Decay, Farmer, FarmerConfig, Nexus, NexusConfig, SuccessorGraph};
pub use window::{detect_pattern, HistoryWindow, PatternPath};

/// Optional request attributes used by attribute-aware predictors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attributes {
    pub user: Option<String>,
    pub process: Option<String>,
    pub host: Option<String>,
}

impl Attributes {
    pub fn is_empty(&self) -> bool {
        self.user.is_none() && self.process.is_none() && self.host.is_none()
    }

    /// Fraction of the three attributes present on both sides and equal.
    pub fn similarity(&self, other: &Attributes) -> f64 {
        let same = |a: &Option<String>, b: &Option<String>| matches!((a, b), (Some(x), Some(y)) if x == y);
        let n = [
            same(&self.user, &other.user),
            same(&self.process, &other.process),
            same(&self.host, &other.host),
        ]
        .into_iter()
        .filter(|&b| b)
        .count();
        n as f64 / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorInput {
    pub path: ResourcePath,
    pub attributes: Attributes,
    pub timestamp_ms: u64,
}

impl PredictorInput {
    pub fn new(path: ResourcePath) -> Self {
        Self {
            path,
            attributes: Attributes::default(),
            timestamp_ms: 0,
        }
    }
}

/// Instruction to expand a directory listing into `A/<child>/B` paths once
/// the listing of `A` is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fanout {
    pub suffix: Vec<String>,
    /// Children sorting after this name come first, then the ones before it.
    pub start_after: Option<String>,
    pub limit: usize,
}

impl Fanout {
    pub fn children(limit: usize) -> Self {
        Self {
            suffix: Vec::new(),
            start_after: None,
            limit,
        }
    }

    /// Paths this fanout yields from a directory listing, skipping `skip`.
    pub fn expand(&self, listing: &MetadataRecord, mut skip: impl FnMut(&ResourcePath) -> bool) -> Vec<ResourcePath> {
        if !listing.is_live() || listing.kind() != EntryKind::Directory {
            return Vec::new();
        }
        let kids = listing.children();
        let pos = match &self.start_after {
            Some(s) => kids.partition_point(|c| c.name.as_str() <= s.as_str()),
            None => 0,
        };
        let mut out = Vec::new();
        for c in kids[pos..].iter().chain(&kids[..pos]) {
            if out.len() >= self.limit {
                break;
            }
            if self.start_after.as_deref() == Some(c.name.as_str()) {
                continue;
            }
            if !self.suffix.is_empty() && c.kind != EntryKind::Directory {
                continue;
            }
            let Ok(mut p) = listing.path().join(&c.name) else { continue };
            if !self.suffix.is_empty() {
                p = p.join_all(&self.suffix);
            }
            if !skip(&p) {
                out.push(p);
            }
        }
        out
    }
}

/// A path to prefetch. A directory fetched with `ttl > 0` re-queues its
/// children with `ttl - 1`, shaped by `fanout` when present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub path: ResourcePath,
    pub ttl: u32,
    pub fanout: Option<Fanout>,
}

impl Candidate {
    pub fn plain(path: ResourcePath, ttl: u32) -> Self {
        Self { path, ttl, fanout: None }
    }
}

pub trait Predictor: Send {
    fn name(&self) -> &'static str;

    /// Observes one access and returns what to prefetch.
    fn observe(&mut self, input: &PredictorInput, hit: bool, cache: &MetaCache) -> Vec<Candidate>;
}

/// When history-based predictors emit predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictOn {
    #[default]
    Every,
    Miss,
}

impl PredictOn {
    pub fn fires(self, hit: bool) -> bool {
        self == PredictOn::Every || !hit
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    #[default]
    None,
    Dls,
    Nexus,
    Farmer,
    Amp,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::None,
        PredictorKind::Dls,
        PredictorKind::Nexus,
        PredictorKind::Farmer,
        PredictorKind::Amp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PredictorKind::None => "lru",
            PredictorKind::Dls => "dls",
            PredictorKind::Nexus => "nexus",
            PredictorKind::Farmer => "farmer",
            PredictorKind::Amp => "amp",
        }
    }
}

impl std::str::FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "lru" => Ok(PredictorKind::None),
            "dls" => Ok(PredictorKind::Dls),
            "nexus" => Ok(PredictorKind::Nexus),
            "farmer" => Ok(PredictorKind::Farmer),
            "amp" => Ok(PredictorKind::Amp),
            other => Err(format!("unknown predictor `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    #[serde(rename = "predictor")]
    pub kind: PredictorKind,
    pub predict_on: PredictOn,
    pub dls: DlsConfig,
    pub nexus: NexusConfig,
    pub farmer: FarmerConfig,
    pub amp: AmpConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("cannot read model {path}: {source}")]
    ModelIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed model line {line}: {text}")]
    ModelFormat { line: usize, text: String },
}

/// Builds the configured predictor for a node whose cache holds
/// `cache_capacity` entries. An AMP model passed in takes precedence over
/// the configured model file.
pub fn build(
    cfg: &PredictorConfig,
    cache_capacity: usize,
    amp_model: Option<Arc<NGramModel>>,
) -> Result<Option<Box<dyn Predictor>>, PredictError> {
    Ok(match cfg.kind {
        PredictorKind::None => None,
        PredictorKind::Dls => Some(Box::new(Dls::new(cfg.dls.clone(), cache_capacity))),
        PredictorKind::Nexus => {
            let mut c = cfg.nexus.clone();
            c.max_vertices.get_or_insert(cache_capacity.max(1));
            Some(Box::new(Nexus::new(c, cfg.predict_on)))
        }
        PredictorKind::Farmer => {
            let mut c = cfg.farmer.clone();
            c.graph.max_vertices.get_or_insert(cache_capacity.max(1));
            Some(Box::new(Farmer::new(c, cfg.predict_on)))
        }
        PredictorKind::Amp => {
            let model = match (amp_model, &cfg.amp.model_path) {
                (Some(m), _) => Some(m),
                (None, Some(p)) => Some(Arc::new(NGramModel::load(p)?)),
                (None, None) => None,
            };
            Some(Box::new(Amp::new(cfg.amp.clone(), cfg.predict_on, model)))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::ChildEntry;

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    fn dir(path: &str, kids: &[(&str, EntryKind)]) -> MetadataRecord {
        let children = kids
            .iter()
            .map(|(n, k)| ChildEntry {
                name: n.to_string(),
                kind: *k,
                size_bytes: 0,
                mtime: 1,
            })
            .collect();
        MetadataRecord::directory(p(path), 1, children)
    }

    #[test]
    fn fanout_starts_after_current_and_wraps() {
        use EntryKind::File;
        let rec = dir("/a", &[("f1", File), ("f2", File), ("f3", File), ("f4", File)]);
        let f = Fanout {
            suffix: vec![],
            start_after: Some("f2".into()),
            limit: 10,
        };
        let got: Vec<String> = f.expand(&rec, |_| false).iter().map(|p| p.to_string()).collect();
        assert_eq!(got, ["/a/f3", "/a/f4", "/a/f1"]);
        let f = Fanout { limit: 1, ..f };
        assert_eq!(f.expand(&rec, |_| false), [p("/a/f3")]);
    }

    #[test]
    fn fanout_with_suffix_uses_directories_only() {
        use EntryKind::*;
        let rec = dir("/logs", &[("d1", Directory), ("x", File), ("d2", Directory)]);
        let f = Fanout {
            suffix: vec!["part.gz".into()],
            start_after: None,
            limit: 10,
        };
        let got = f.expand(&rec, |q| *q == p("/logs/d1/part.gz"));
        assert_eq!(got, [p("/logs/d2/part.gz")]);
    }

    #[test]
    fn similarity_counts_equal_present_attributes() {
        let a = Attributes {
            user: Some("u".into()),
            process: Some("p".into()),
            host: None,
        };
        let b = Attributes {
            user: Some("u".into()),
            process: Some("q".into()),
            host: None,
        };
        assert!((a.similarity(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(Attributes::default().similarity(&Attributes::default()), 0.0);
    }

    #[test]
    fn kinds_parse() {
        for k in PredictorKind::ALL {
            assert_eq!(k.label().parse::<PredictorKind>().unwrap(), k);
        }
        assert!("bogus".parse::<PredictorKind>().is_err());
    }
}
