//! Experiment configuration: one TOML file, dotted `key=value` overrides,
//! and a resolver that turns it into a [`WorldConfig`] for a given trace.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuum::{LayerConfig, PoolConfig, Role, WorldConfig};
use crate::predict::{PredictorConfig, PredictorKind};
use crate::remote::LatencyModel;
use crate::trace::GeneratorSpec;

/// Environment variable naming the config file used when none is given.
pub const CONFIG_ENV: &str = "METAFETCH_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad override `{0}`: expected key.path=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// Clients fetch from the remote node directly.
    E,
    #[default]
    EC,
    EFC,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::E => "E",
            Topology::EC => "EC",
            Topology::EFC => "EFC",
        })
    }
}

/// Cache size: an entry count, a percentage of the trace's requests
/// (`"10%"`), or `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CapacityRepr", into = "CapacityRepr")]
pub enum Capacity {
    Entries(usize),
    Percent(f64),
    Unbounded,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CapacityRepr {
    N(u64),
    S(String),
}

impl TryFrom<CapacityRepr> for Capacity {
    type Error = String;

    fn try_from(r: CapacityRepr) -> Result<Self, String> {
        match r {
            CapacityRepr::N(n) => Ok(Capacity::Entries(n as usize)),
            CapacityRepr::S(s) => s.parse(),
        }
    }
}

impl From<Capacity> for CapacityRepr {
    fn from(c: Capacity) -> Self {
        match c {
            Capacity::Entries(n) => CapacityRepr::N(n as u64),
            other => CapacityRepr::S(other.to_string()),
        }
    }
}

impl std::str::FromStr for Capacity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("unbounded") {
            return Ok(Capacity::Unbounded);
        }
        if let Some(p) = s.strip_suffix('%') {
            let x: f64 = p.trim().parse().map_err(|_| format!("bad percentage `{s}`"))?;
            if !(0.0..=100.0).contains(&x) {
                return Err(format!("percentage {x} outside [0, 100]"));
            }
            return Ok(Capacity::Percent(x));
        }
        s.parse().map(Capacity::Entries).map_err(|_| format!("bad capacity `{s}`"))
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Entries(n) => write!(f, "{n}"),
            Capacity::Percent(p) => write!(f, "{p}%"),
            Capacity::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Capacity {
    /// Entries for a trace of `requests` list operations; `None` is unbounded.
    pub fn resolve(self, requests: usize) -> Option<usize> {
        match self {
            Capacity::Entries(n) => Some(n),
            Capacity::Percent(p) => Some((p / 100.0 * requests as f64).round() as usize),
            Capacity::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerSettings {
    pub capacity: Capacity,
    #[serde(flatten)]
    pub predictor: PredictorConfig,
    pub expansion_limit: usize,
}

impl LayerSettings {
    fn with(capacity: Capacity, prefetch_ttl: u32) -> Self {
        let mut predictor = PredictorConfig::default();
        predictor.dls.prefetch_ttl = prefetch_ttl;
        Self {
            capacity,
            predictor,
            expansion_limit: 1024,
        }
    }
}

impl Default for LayerSettings {
    fn default() -> Self {
        Self::with(Capacity::Entries(0), 0)
    }
}

/// Round-trip times of each hop, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Links {
    pub edge_cloud_rtt_ms: f64,
    pub edge_fog_rtt_ms: f64,
    pub fog_cloud_rtt_ms: f64,
    /// Cloud services to the remote node.
    pub remote_rtt_ms: f64,
    /// Client to remote node with no cache in between.
    pub direct_rtt_ms: f64,
}

impl Default for Links {
    fn default() -> Self {
        Self {
            edge_cloud_rtt_ms: 10.0,
            edge_fog_rtt_ms: 2.0,
            fog_cloud_rtt_ms: 10.0,
            remote_rtt_ms: 30.0,
            direct_rtt_ms: 32.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolSettings {
    pub services: usize,
    pub pipeline_capacity: usize,
    pub retry_budget: u32,
    pub clean_age_ms: f64,
    pub service_time_ms: f64,
}

impl Default for PoolSettings {
    fn default() -> Self {
        let p = PoolConfig::default();
        Self {
            services: p.services,
            pipeline_capacity: p.capacity,
            retry_budget: p.retry_budget,
            clean_age_ms: p.clean_age_ms,
            service_time_ms: p.service_time_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSource {
    /// Trace file; when unset a trace is generated from `generate`.
    pub path: Option<PathBuf>,
    /// Earlier trace to train AMP on, and whose paths join the namespace.
    pub train_path: Option<PathBuf>,
    /// With a generated trace, 2 replays the second of a correlated pair
    /// and trains AMP on the first.
    pub day: u8,
    pub generate: GeneratorSpec,
}

impl Default for TraceSource {
    fn default() -> Self {
        Self {
            path: None,
            train_path: None,
            day: 1,
            generate: GeneratorSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub topology: Topology,
    pub edge: LayerSettings,
    pub fog: LayerSettings,
    pub cloud: LayerSettings,
    pub links: Links,
    pub pool: PoolSettings,
    /// Block size used when reporting how many block objects the cached
    /// records would occupy.
    pub block_size: usize,
    pub trace: TraceSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            topology: Topology::EC,
            edge: LayerSettings::with(Capacity::Percent(10.0), 0),
            fog: LayerSettings::with(Capacity::Percent(5.0), 1),
            cloud: LayerSettings::with(Capacity::Unbounded, 0),
            links: Links::default(),
            pool: PoolSettings::default(),
            block_size: 64 * 1024,
            trace: TraceSource::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` over the defaults, then applies `key.path=value`
    /// overrides. Values are read as TOML literals, falling back to plain
    /// strings. Merging over the full default document keeps per-layer
    /// defaults (the fog's prefetch TTL) when a layer table is only partly
    /// given.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc = toml::Table::try_from(Self::default()).expect("defaults serialize");
        merge(&mut doc, text.parse()?);
        for o in overrides {
            set_dotted(&mut doc, o)?;
        }
        let cfg: Self = toml::Value::Table(doc).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or the file named by `METAFETCH_CONFIG`, or starts
    /// from the defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let text = match path.map(Path::to_path_buf).or(from_env) {
            Some(p) => std::fs::read_to_string(&p).map_err(|source| ConfigError::Io { path: p, source })?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let l = &self.links;
        for (name, v) in [
            ("links.edge_cloud_rtt_ms", l.edge_cloud_rtt_ms),
            ("links.edge_fog_rtt_ms", l.edge_fog_rtt_ms),
            ("links.fog_cloud_rtt_ms", l.fog_cloud_rtt_ms),
            ("links.remote_rtt_ms", l.remote_rtt_ms),
            ("links.direct_rtt_ms", l.direct_rtt_ms),
            ("pool.clean_age_ms", self.pool.clean_age_ms),
            ("pool.service_time_ms", self.pool.service_time_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if self.pool.services == 0 || self.pool.pipeline_capacity == 0 {
            return bad("pool.services and pool.pipeline_capacity must be at least 1".into());
        }
        if self.block_size == 0 {
            return bad("block_size must be at least 1".into());
        }
        if !matches!(self.trace.day, 1 | 2) {
            return bad(format!("trace.day must be 1 or 2, got {}", self.trace.day));
        }
        if self.trace.day == 2 && self.trace.path.is_some() {
            return bad("trace.day = 2 applies to generated traces; use trace.train_path with a file".into());
        }
        Ok(())
    }

    /// Layers in use, edge first.
    pub fn layers(&self) -> Vec<(Role, &LayerSettings)> {
        match self.topology {
            Topology::E => vec![(Role::Edge, &self.edge)],
            Topology::EC => vec![(Role::Edge, &self.edge), (Role::Cloud, &self.cloud)],
            Topology::EFC => vec![(Role::Edge, &self.edge), (Role::Fog, &self.fog), (Role::Cloud, &self.cloud)],
        }
    }

    pub fn uses(&self, kind: PredictorKind) -> bool {
        self.layers().iter().any(|(_, l)| l.predictor.kind == kind)
    }

    /// The simulated world for a trace with `requests` list operations.
    /// Topology E has no cache at all: clients reach the remote node over
    /// the direct link.
    pub fn world(&self, requests: usize) -> WorldConfig {
        let l = &self.links;
        let pool_rtt = if self.topology == Topology::E {
            l.direct_rtt_ms
        } else {
            l.remote_rtt_ms
        };
        let layers = self
            .layers()
            .into_iter()
            .enumerate()
            .map(|(i, (role, s))| {
                let uplink_rtt = match (self.topology, i) {
                    (Topology::EC, 0) => l.edge_cloud_rtt_ms,
                    (Topology::EFC, 0) => l.edge_fog_rtt_ms,
                    (Topology::EFC, 1) => l.fog_cloud_rtt_ms,
                    _ => 0.0,
                };
                let capacity = if self.topology == Topology::E {
                    Some(0)
                } else {
                    s.capacity.resolve(requests)
                };
                LayerConfig {
                    role,
                    capacity,
                    uplink: LatencyModel::from_rtt(uplink_rtt),
                    predictor: s.predictor.clone(),
                    expansion_limit: s.expansion_limit,
                }
            })
            .collect();
        WorldConfig {
            layers,
            pool: PoolConfig {
                services: self.pool.services,
                capacity: self.pool.pipeline_capacity,
                link: LatencyModel::from_rtt(pool_rtt),
                retry_budget: self.pool.retry_budget,
                clean_age_ms: self.pool.clean_age_ms,
                service_time_ms: self.pool.service_time_ms,
            },
            record_outcomes: false,
        }
    }
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_dotted(doc: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let err = || ConfigError::Override(assignment.to_string());
    let (key, raw) = assignment.split_once('=').ok_or_else(err)?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err());
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut t = doc;
    for p in path {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(err)?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn capacity_forms() {
        let c = ExperimentConfig::from_toml(
            "topology = \"EFC\"\n[edge]\ncapacity = \"0.5%\"\npredictor = \"dls\"\n[fog]\ncapacity = 300\n",
        )
        .unwrap();
        let w = c.world(10_000);
        assert_eq!(w.layers.iter().map(|l| l.capacity).collect::<Vec<_>>(), [Some(50), Some(300), None]);
        assert_eq!(w.layers[0].predictor.kind, PredictorKind::Dls);
        assert_eq!(w.layers[1].predictor.dls.prefetch_ttl, 1);
        assert_eq!(w.layers[0].predictor.dls.prefetch_ttl, 0);
        assert!("150%".parse::<Capacity>().is_err());
    }

    #[test]
    fn overrides_apply_in_order() {
        let c = ExperimentConfig::from_toml_with(
            "seed = 3",
            &["seed=9".into(), "edge.predictor=nexus".into(), "edge.dls.window=8".into(), "trace.generate.events=500".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.edge.predictor.kind, PredictorKind::Nexus);
        assert_eq!(c.edge.predictor.dls.window, 8);
        assert_eq!(c.trace.generate.events, 500);
        assert!(ExperimentConfig::from_toml_with("", &["noequals".into()]).is_err());
    }

    #[test]
    fn end_to_end_rtts() {
        let c = ExperimentConfig::default();
        let w = c.world(100);
        let total: f64 = w.layers.iter().map(|l| l.uplink.rtt_ms()).sum::<f64>() + w.pool.link.rtt_ms();
        assert_eq!(total, 40.0);
        let e = ExperimentConfig {
            topology: Topology::E,
            ..c
        };
        let w = e.world(100);
        assert_eq!((w.layers.len(), w.layers[0].capacity, w.pool.link.rtt_ms()), (1, Some(0), 32.0));
    }

    #[test]
    fn validation_messages() {
        for (text, needle) in [
            ("[pool]\nservices = 0", "pool.services"),
            ("[links]\nremote_rtt_ms = -1.0", "remote_rtt_ms"),
            ("block_size = 0", "block_size"),
            ("[trace]\nday = 3", "trace.day"),
        ] {
            let e = ExperimentConfig::from_toml(text).unwrap_err().to_string();
            assert!(e.contains(needle), "{e}");
        }
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }
}
