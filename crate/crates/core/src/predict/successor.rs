use std::collections::VecDeque;
use std::num::NonZeroUsize;

use indexmap::IndexMap;
use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::cache::MetaCache;
use crate::meta::ResourcePath;

use super::{Attributes, Candidate, PredictOn, Predictor, PredictorInput};

/// How much a predecessor at distance `d` adds to its edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    /// `W - d + 1`.
    #[default]
    Linear,
    /// Always 1.
    Flat,
}

#[derive(Debug)]
struct Vertex {
    out: IndexMap<ResourcePath, u64>,
    attrs: Attributes,
}

impl Vertex {
    fn new() -> Self {
        Self {
            out: IndexMap::new(),
            attrs: Attributes::default(),
        }
    }
}

/// Weighted successor graph over recent requests. Every request still in the
/// history queue gains an edge to each new arrival. Vertices are kept in LRU
/// order and each keeps at most `window` out-edges, the lightest dropped
/// first.
#[derive(Debug)]
pub struct SuccessorGraph {
    window: usize,
    decay: Decay,
    history: VecDeque<ResourcePath>,
    vertices: LruCache<ResourcePath, Vertex>,
}

impl SuccessorGraph {
    pub fn new(window: usize, max_vertices: usize, decay: Decay) -> Self {
        let cap = NonZeroUsize::new(max_vertices.max(1)).expect("nonzero");
        Self {
            window: window.max(1),
            decay,
            history: VecDeque::with_capacity(window + 1),
            vertices: LruCache::new(cap),
        }
    }

    pub fn record(&mut self, path: &ResourcePath, attrs: &Attributes) {
        let w = self.window as u64;
        for (i, pred) in self.history.iter().rev().enumerate() {
            if pred == path {
                continue;
            }
            let d = i as u64 + 1;
            let add = match self.decay {
                Decay::Linear => w - d + 1,
                Decay::Flat => 1,
            };
            let v = self.vertices.get_or_insert_mut(pred.clone(), Vertex::new);
            *v.out.entry(path.clone()).or_insert(0) += add;
            if v.out.len() > self.window {
                let victim = v
                    .out
                    .iter()
                    .filter(|(k, _)| *k != path)
                    .min_by_key(|(_, &wt)| wt)
                    .map(|(k, _)| k.clone());
                if let Some(k) = victim {
                    v.out.shift_remove(&k);
                }
            }
        }
        let v = self.vertices.get_or_insert_mut(path.clone(), Vertex::new);
        if !attrs.is_empty() {
            v.attrs = attrs.clone();
        }
        self.history.push_back(path.clone());
        if self.history.len() > self.window {
            self.history.pop_front();
        }
    }

    pub fn weight(&self, from: &ResourcePath, to: &ResourcePath) -> u64 {
        self.vertices
            .peek(from)
            .and_then(|v| v.out.get(to).copied())
            .unwrap_or(0)
    }

    /// Out-neighbors in first-seen order.
    pub fn successors(&self, from: &ResourcePath) -> Vec<(ResourcePath, u64)> {
        self.vertices
            .peek(from)
            .map(|v| v.out.iter().map(|(k, &w)| (k.clone(), w)).collect())
            .unwrap_or_default()
    }

    pub fn attributes(&self, path: &ResourcePath) -> Option<&Attributes> {
        self.vertices.peek(path).map(|v| &v.attrs)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// The `k` heaviest out-neighbors; ties keep first-seen order.
    pub fn top_k(&self, from: &ResourcePath, k: usize) -> Vec<ResourcePath> {
        let mut s = self.successors(from);
        s.sort_by(|a, b| b.1.cmp(&a.1));
        s.into_iter().take(k).map(|(p, _)| p).collect()
    }
}

const DEFAULT_VERTICES: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NexusConfig {
    pub window: usize,
    pub k: usize,
    /// Graph vertices kept in LRU order; unset means the node's cache
    /// capacity.
    pub max_vertices: Option<usize>,
    pub decay: Decay,
}

impl Default for NexusConfig {
    fn default() -> Self {
        Self {
            window: 8,
            k: 2,
            max_vertices: None,
            decay: Decay::Linear,
        }
    }
}

/// History-graph predictor: prefetches the heaviest successors of the
/// current request.
#[derive(Debug)]
pub struct Nexus {
    graph: SuccessorGraph,
    k: usize,
    on: PredictOn,
}

impl Nexus {
    pub fn new(cfg: NexusConfig, on: PredictOn) -> Self {
        Self {
            graph: SuccessorGraph::new(cfg.window, cfg.max_vertices.unwrap_or(DEFAULT_VERTICES), cfg.decay),
            k: cfg.k,
            on,
        }
    }

    pub fn graph(&self) -> &SuccessorGraph {
        &self.graph
    }

    pub fn update_and_predict(&mut self, input: &PredictorInput) -> Vec<ResourcePath> {
        self.graph.record(&input.path, &input.attributes);
        self.graph.top_k(&input.path, self.k)
    }
}

impl Predictor for Nexus {
    fn name(&self) -> &'static str {
        "nexus"
    }

    fn observe(&mut self, input: &PredictorInput, hit: bool, _cache: &MetaCache) -> Vec<Candidate> {
        let out = self.update_and_predict(input);
        if !self.on.fires(hit) {
            return Vec::new();
        }
        out.into_iter().map(|p| Candidate::plain(p, 0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FarmerConfig {
    #[serde(flatten)]
    pub graph: NexusConfig,
    pub alpha: f64,
}

impl Default for FarmerConfig {
    fn default() -> Self {
        Self {
            graph: NexusConfig::default(),
            alpha: 0.5,
        }
    }
}

/// Successor graph blended with attribute similarity:
/// `alpha * w / w_max + (1 - alpha) * similarity`.
#[derive(Debug)]
pub struct Farmer {
    graph: SuccessorGraph,
    k: usize,
    alpha: f64,
    on: PredictOn,
}

impl Farmer {
    pub fn new(cfg: FarmerConfig, on: PredictOn) -> Self {
        Self {
            graph: SuccessorGraph::new(
                cfg.graph.window,
                cfg.graph.max_vertices.unwrap_or(DEFAULT_VERTICES),
                cfg.graph.decay,
            ),
            k: cfg.graph.k,
            alpha: cfg.alpha.clamp(0.0, 1.0),
            on,
        }
    }

    pub fn graph(&self) -> &SuccessorGraph {
        &self.graph
    }

    /// Ranks the out-neighbors of `input.path` without updating the graph.
    pub fn rank(&self, input: &PredictorInput) -> Vec<ResourcePath> {
        let succ = self.graph.successors(&input.path);
        let max_w = succ.iter().map(|s| s.1).max().unwrap_or(0).max(1) as f64;
        let mut scored: Vec<(f64, u64, ResourcePath)> = succ
            .into_iter()
            .map(|(p, w)| {
                let sim = self
                    .graph
                    .attributes(&p)
                    .map_or(0.0, |a| input.attributes.similarity(a));
                let score = self.alpha * (w as f64 / max_w) + (1.0 - self.alpha) * sim;
                (score, w, p)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        scored.into_iter().take(self.k).map(|s| s.2).collect()
    }

    pub fn update_and_predict(&mut self, input: &PredictorInput) -> Vec<ResourcePath> {
        self.graph.record(&input.path, &input.attributes);
        self.rank(input)
    }
}

impl Predictor for Farmer {
    fn name(&self) -> &'static str {
        "farmer"
    }

    fn observe(&mut self, input: &PredictorInput, hit: bool, _cache: &MetaCache) -> Vec<Candidate> {
        let out = self.update_and_predict(input);
        if !self.on.fires(hit) {
            return Vec::new();
        }
        out.into_iter().map(|p| Candidate::plain(p, 0)).collect()
    }
}
