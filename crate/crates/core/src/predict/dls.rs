use serde::{Deserialize, Serialize};

use crate::cache::MetaCache;
use crate::meta::{EntryKind, ResourcePath};

use super::{detect_pattern, Candidate, Fanout, HistoryWindow, PatternPath, Predictor, PredictorInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DlsConfig {
    pub window: usize,
    pub pattern_min: usize,
    pub threshold: u32,
    pub prefetch_ttl: u32,
    /// Pattern needs more than `pattern_min` matches instead of at least.
    pub strict_pattern: bool,
    /// Counter must exceed `threshold` instead of reaching it.
    pub strict_trigger: bool,
    /// Upper bound on candidates per emission; by default a quarter of the
    /// cache, at most 4096.
    pub max_prefetch: Option<usize>,
}

impl Default for DlsConfig {
    fn default() -> Self {
        Self {
            window: 32,
            pattern_min: 3,
            threshold: 2,
            prefetch_ttl: 0,
            strict_pattern: false,
            strict_trigger: true,
            max_prefetch: None,
        }
    }
}

/// Semantic-locality predictor: finds the `A ? B` pattern shared by recent
/// misses and, once its counter passes the threshold, prefetches the other
/// instances of the pattern.
#[derive(Debug)]
pub struct Dls {
    cfg: DlsConfig,
    window: HistoryWindow,
    max_prefetch: usize,
    emissions: u64,
}

impl Dls {
    pub fn new(cfg: DlsConfig, cache_capacity: usize) -> Self {
        let max_prefetch = cfg
            .max_prefetch
            .unwrap_or_else(|| (cache_capacity / 4).clamp(1, 4096));
        Self {
            window: HistoryWindow::new(cfg.window),
            cfg,
            max_prefetch,
            emissions: 0,
        }
    }

    pub fn window(&self) -> &HistoryWindow {
        &self.window
    }

    pub fn max_prefetch(&self) -> usize {
        self.max_prefetch
    }

    pub fn emissions(&self) -> u64 {
        self.emissions
    }

    fn candidates(&self, pat: &PatternPath, path: &ResourcePath, cache: &MetaCache) -> Vec<Candidate> {
        let parent = pat.prefix_path();
        let current = path.segments()[pat.wildcard_index()].clone();
        let fanout = Fanout {
            suffix: pat.suffix.clone(),
            start_after: Some(current),
            limit: self.max_prefetch,
        };
        match cache.peek(&parent) {
            Some(listing) if listing.is_live() && listing.kind() == EntryKind::Directory => {
                cache.touch(&parent);
                fanout
                    .expand(&listing, |p| cache.contains_record(p))
                    .into_iter()
                    .map(|p| Candidate::plain(p, self.cfg.prefetch_ttl))
                    .collect()
            }
            _ => vec![Candidate {
                path: parent,
                ttl: self.cfg.prefetch_ttl + 1,
                fanout: Some(fanout),
            }],
        }
    }
}

impl Predictor for Dls {
    fn name(&self) -> &'static str {
        "dls"
    }

    fn observe(&mut self, input: &PredictorInput, hit: bool, cache: &MetaCache) -> Vec<Candidate> {
        if hit {
            self.window.insert(input.path.clone());
            return Vec::new();
        }
        let pat = detect_pattern(&self.window, &input.path, self.cfg.pattern_min, self.cfg.strict_pattern);
        self.window.insert(input.path.clone());
        let Some(pat) = pat else { return Vec::new() };
        let count = cache.note_pattern_miss(&pat);
        let fire = if self.cfg.strict_trigger {
            count > self.cfg.threshold
        } else {
            count >= self.cfg.threshold
        };
        if !fire {
            return Vec::new();
        }
        cache.reset_pattern(&pat);
        self.emissions += 1;
        self.candidates(&pat, &input.path, cache)
    }
}
