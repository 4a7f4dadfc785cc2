//! Bounded LRU metadata cache.
//!
//! Metadata records, per-path miss counters and access-pattern objects all
//! live in one recency list and compete for the same capacity, so the miss
//! history of cold paths is evicted along with cold metadata.

use std::collections::BTreeSet;
use std::num::NonZeroUsize;

use lru::LruCache;
use parking_lot::Mutex;
use serde::Serialize;

use crate::meta::{
    resolve_conflict, ConditionalStore, ConflictResolution, MetadataRecord, OverwriteOutcome, ResourcePath,
};
use crate::predict::PatternPath;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CacheKey {
    Path(ResourcePath),
    Pattern(String),
}

impl CacheKey {
    /// Stable 64-bit digest of the key.
    pub fn digest(&self) -> u64 {
        match self {
            CacheKey::Path(p) => p.key(),
            CacheKey::Pattern(s) => crate::meta::digest_bytes(s.as_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheSlot {
    Record(MetadataRecord),
    Pattern(PatternPath),
    /// Only the miss counter is known for this path.
    CounterOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub slot: CacheSlot,
    pub miss_counter: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub lookups: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub size: usize,
    pub capacity: usize,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        if self.lookups == 0 {
            0.0
        } else {
            self.hits as f64 / self.lookups as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PutOutcome {
    pub stored: bool,
    pub evicted: Option<CacheKey>,
}

struct Inner {
    lru: Option<LruCache<CacheKey, CacheEntry>>,
    /// Path keys in order, so a subtree is one contiguous range.
    paths: BTreeSet<ResourcePath>,
    stats: CacheStats,
}

impl Inner {
    /// Inserts a new key, evicting the least recent entry when full.
    fn insert_new(&mut self, key: CacheKey, entry: CacheEntry) -> Option<CacheKey> {
        let lru = self.lru.as_mut()?;
        if let CacheKey::Path(p) = &key {
            self.paths.insert(p.clone());
        }
        let evicted = lru.push(key, entry).map(|(k, _)| k);
        if let Some(k) = &evicted {
            self.stats.evictions += 1;
            if let CacheKey::Path(p) = k {
                self.paths.remove(p);
            }
        }
        evicted
    }
}

/// Thread-safe LRU cache. Capacity 0 disables caching entirely.
pub struct MetaCache {
    inner: Mutex<Inner>,
    capacity: usize,
}

impl std::fmt::Debug for MetaCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetaCache")
            .field("capacity", &self.capacity)
            .field("stats", &self.stats())
            .finish()
    }
}

impl MetaCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: Mutex::new(Inner {
                lru: NonZeroUsize::new(capacity).map(LruCache::new),
                paths: BTreeSet::new(),
                stats: CacheStats {
                    capacity,
                    ..Default::default()
                },
            }),
            capacity,
        }
    }

    /// A cache that never evicts.
    pub fn unbounded() -> Self {
        Self {
            inner: Mutex::new(Inner {
                lru: Some(LruCache::unbounded()),
                paths: BTreeSet::new(),
                stats: CacheStats {
                    capacity: usize::MAX,
                    ..Default::default()
                },
            }),
            capacity: usize::MAX,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.inner.lock().lru.as_ref().map_or(0, LruCache::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        let g = self.inner.lock();
        CacheStats {
            size: g.lru.as_ref().map_or(0, LruCache::len),
            ..g.stats
        }
    }

    /// Counted lookup. A hit promotes the entry.
    pub fn get(&self, path: &ResourcePath) -> Option<MetadataRecord> {
        let mut g = self.inner.lock();
        g.stats.lookups += 1;
        let found = g
            .lru
            .as_mut()
            .and_then(|l| l.get(&CacheKey::Path(path.clone())))
            .and_then(|e| match &e.slot {
                CacheSlot::Record(r) => Some(r.clone()),
                _ => None,
            });
        if found.is_some() {
            g.stats.hits += 1;
        } else {
            g.stats.misses += 1;
        }
        found
    }

    /// Uncounted lookup without promotion.
    pub fn peek(&self, path: &ResourcePath) -> Option<MetadataRecord> {
        let g = self.inner.lock();
        match &g.lru.as_ref()?.peek(&CacheKey::Path(path.clone()))?.slot {
            CacheSlot::Record(r) => Some(r.clone()),
            _ => None,
        }
    }

    pub fn contains_record(&self, path: &ResourcePath) -> bool {
        let g = self.inner.lock();
        g.lru
            .as_ref()
            .and_then(|l| l.peek(&CacheKey::Path(path.clone())))
            .is_some_and(|e| matches!(e.slot, CacheSlot::Record(_)))
    }

    /// Promotes an entry without counting a lookup.
    pub fn touch(&self, path: &ResourcePath) {
        if let Some(l) = self.inner.lock().lru.as_mut() {
            l.promote(&CacheKey::Path(path.clone()));
        }
    }

    /// Version-gated insert. A stale record changes nothing, not even recency.
    pub fn put(&self, record: MetadataRecord) -> PutOutcome {
        let mut g = self.inner.lock();
        let key = CacheKey::Path(record.path().clone());
        let Some(lru) = g.lru.as_mut() else {
            return PutOutcome {
                stored: false,
                evicted: None,
            };
        };
        if let Some(e) = lru.peek_mut(&key) {
            let cached = match &e.slot {
                CacheSlot::Record(r) => Some(r),
                _ => None,
            };
            if resolve_conflict(cached, &record) == ConflictResolution::KeepCached {
                return PutOutcome {
                    stored: false,
                    evicted: None,
                };
            }
            e.slot = CacheSlot::Record(record);
            lru.promote(&key);
            return PutOutcome {
                stored: true,
                evicted: None,
            };
        }
        let evicted = g.insert_new(
            key,
            CacheEntry {
                slot: CacheSlot::Record(record),
                miss_counter: 0,
            },
        );
        PutOutcome { stored: true, evicted }
    }

    /// Increments (or starts at 1) the miss counter of `path`.
    pub fn note_miss(&self, path: &ResourcePath) -> u32 {
        self.bump(CacheKey::Path(path.clone()), || CacheSlot::CounterOnly)
    }

    pub fn miss_counter(&self, path: &ResourcePath) -> u32 {
        self.counter_of(&CacheKey::Path(path.clone()))
    }

    pub fn reset_counter(&self, path: &ResourcePath) {
        self.reset(&CacheKey::Path(path.clone()));
    }

    /// Counts a miss against a pattern object, creating it at 1.
    pub fn note_pattern_miss(&self, pattern: &PatternPath) -> u32 {
        let p = pattern.clone();
        self.bump(CacheKey::Pattern(pattern.key_string()), move || CacheSlot::Pattern(p))
    }

    pub fn pattern_counter(&self, pattern: &PatternPath) -> u32 {
        self.counter_of(&CacheKey::Pattern(pattern.key_string()))
    }

    pub fn reset_pattern(&self, pattern: &PatternPath) {
        self.reset(&CacheKey::Pattern(pattern.key_string()));
    }

    fn bump(&self, key: CacheKey, make: impl FnOnce() -> CacheSlot) -> u32 {
        let mut g = self.inner.lock();
        let Some(lru) = g.lru.as_mut() else { return 1 };
        if let Some(e) = lru.get_mut(&key) {
            e.miss_counter += 1;
            return e.miss_counter;
        }
        g.insert_new(
            key,
            CacheEntry {
                slot: make(),
                miss_counter: 1,
            },
        );
        1
    }

    fn counter_of(&self, key: &CacheKey) -> u32 {
        let g = self.inner.lock();
        g.lru.as_ref().and_then(|l| l.peek(key)).map_or(0, |e| e.miss_counter)
    }

    fn reset(&self, key: &CacheKey) {
        if let Some(e) = self.inner.lock().lru.as_mut().and_then(|l| l.peek_mut(key)) {
            e.miss_counter = 0;
        }
    }

    pub fn remove(&self, path: &ResourcePath) -> Option<CacheEntry> {
        let mut g = self.inner.lock();
        g.paths.remove(path);
        g.lru.as_mut()?.pop(&CacheKey::Path(path.clone()))
    }

    /// Replaces every live record at or under `prefix` with its deleted
    /// marker. Returns how many records were marked.
    pub fn mark_subtree_deleted(&self, prefix: &ResourcePath) -> usize {
        let mut g = self.inner.lock();
        let Inner { lru, paths, .. } = &mut *g;
        let Some(lru) = lru.as_mut() else { return 0 };
        let mut n = 0;
        for p in paths.range(prefix.clone()..).take_while(|p| p.starts_with(prefix)) {
            if let Some(CacheEntry {
                slot: CacheSlot::Record(r),
                ..
            }) = lru.peek_mut(&CacheKey::Path(p.clone()))
            {
                if r.is_live() {
                    *r = r.deleted_marker();
                    n += 1;
                }
            }
        }
        n
    }

    /// Every cached record, most recent first.
    pub fn records(&self) -> Vec<MetadataRecord> {
        let g = self.inner.lock();
        let Some(lru) = g.lru.as_ref() else { return Vec::new() };
        lru.iter()
            .filter_map(|(_, e)| match &e.slot {
                CacheSlot::Record(r) => Some(r.clone()),
                _ => None,
            })
            .collect()
    }

    /// Keys from least to most recently used.
    pub fn keys_lru_order(&self) -> Vec<CacheKey> {
        let g = self.inner.lock();
        let Some(lru) = g.lru.as_ref() else { return Vec::new() };
        lru.iter().rev().map(|(k, _)| k.clone()).collect()
    }
}

impl ConditionalStore for MetaCache {
    /// Compare-digest-and-swap on a cached record. Bypasses the version
    /// gate, so a deleted marker with an unchanged version can land.
    fn conditional_overwrite(
        &mut self,
        key: &ResourcePath,
        expected_digest: u64,
        new_record: MetadataRecord,
    ) -> OverwriteOutcome {
        MetaCache::conditional_overwrite(self, key, expected_digest, new_record)
    }
}

impl MetaCache {
    pub fn conditional_overwrite(
        &self,
        key: &ResourcePath,
        expected_digest: u64,
        new_record: MetadataRecord,
    ) -> OverwriteOutcome {
        let mut g = self.inner.lock();
        let Some(lru) = g.lru.as_mut() else { return OverwriteOutcome::LostRace };
        let k = CacheKey::Path(key.clone());
        match lru.peek_mut(&k) {
            Some(CacheEntry {
                slot: CacheSlot::Record(r),
                ..
            }) if r.digest() == expected_digest => {
                *r = new_record;
                lru.promote(&k);
                OverwriteOutcome::Applied
            }
            _ => OverwriteOutcome::LostRace,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    fn rec(path: &str, mtime: u64) -> MetadataRecord {
        MetadataRecord::file(p(path), 0, mtime)
    }

    #[test]
    fn get_after_put_hits() {
        let c = MetaCache::new(4);
        c.put(rec("/a", 1));
        assert!(c.get(&p("/a")).is_some());
        let s = c.stats();
        assert_eq!((s.hits, s.misses, s.lookups), (1, 0, 1));
    }

    #[test]
    fn least_recent_is_evicted() {
        let c = MetaCache::new(2);
        c.put(rec("/a", 1));
        c.put(rec("/b", 1));
        let out = c.put(rec("/c", 1));
        assert_eq!(out.evicted, Some(CacheKey::Path(p("/a"))));
        assert!(c.get(&p("/a")).is_none());
        assert_eq!(c.stats().evictions, 1);
    }

    #[test]
    fn stale_put_is_ignored_and_does_not_promote() {
        let c = MetaCache::new(2);
        c.put(rec("/a", 5));
        c.put(rec("/b", 1));
        assert!(!c.put(rec("/a", 4)).stored);
        assert_eq!(c.peek(&p("/a")).unwrap().mtime(), 5);
        c.put(rec("/c", 1));
        // /a was still least recent
        assert!(c.peek(&p("/a")).is_none());
    }

    #[test]
    fn same_key_twice_keeps_size() {
        let c = MetaCache::new(3);
        c.put(rec("/a", 1));
        c.put(rec("/a", 2));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn counters_share_the_pool() {
        let c = MetaCache::new(2);
        for _ in 0..3 {
            c.note_miss(&p("/k"));
        }
        assert_eq!(c.miss_counter(&p("/k")), 3);
        c.put(rec("/x", 1));
        c.put(rec("/y", 1));
        // the counter entry was the coldest
        assert_eq!(c.miss_counter(&p("/k")), 0);
        assert_eq!(c.note_miss(&p("/k")), 1);
        c.reset_counter(&p("/k"));
        assert_eq!(c.miss_counter(&p("/k")), 0);
    }

    #[test]
    fn counter_entry_upgrades_to_record() {
        let c = MetaCache::new(2);
        c.note_miss(&p("/k"));
        c.put(rec("/k", 1));
        assert_eq!(c.len(), 1);
        assert_eq!(c.miss_counter(&p("/k")), 1);
        assert!(c.contains_record(&p("/k")));
    }

    #[test]
    fn zero_capacity_caches_nothing() {
        let c = MetaCache::new(0);
        assert!(!c.put(rec("/a", 1)).stored);
        assert!(c.get(&p("/a")).is_none());
        assert_eq!(c.stats().misses, 1);
    }

    #[test]
    fn subtree_marking_and_conditional_overwrite() {
        let c = MetaCache::new(8);
        c.put(rec("/a/b", 1));
        c.put(rec("/a/b/x", 1));
        c.put(rec("/a/c", 1));
        assert_eq!(c.mark_subtree_deleted(&p("/a/b")), 2);
        assert!(!c.peek(&p("/a/b/x")).unwrap().is_live());
        assert!(c.peek(&p("/a/c")).unwrap().is_live());
        let cur = c.peek(&p("/a/c")).unwrap();
        let marker = cur.deleted_marker();
        assert_eq!(c.conditional_overwrite(&p("/a/c"), cur.digest() ^ 1, marker.clone()), OverwriteOutcome::LostRace);
        assert_eq!(c.conditional_overwrite(&p("/a/c"), cur.digest(), marker), OverwriteOutcome::Applied);
        assert!(!c.peek(&p("/a/c")).unwrap().is_live());
    }

    /// Reference LRU: a plain vector, most recent at the end.
    struct ListLru {
        cap: usize,
        items: Vec<u8>,
    }

    impl ListLru {
        fn get(&mut self, k: u8) -> bool {
            match self.items.iter().position(|&x| x == k) {
                Some(i) => {
                    let v = self.items.remove(i);
                    self.items.push(v);
                    true
                }
                None => false,
            }
        }

        fn put(&mut self, k: u8) -> Option<u8> {
            if self.get(k) {
                return None;
            }
            self.items.push(k);
            if self.items.len() > self.cap {
                Some(self.items.remove(0))
            } else {
                None
            }
        }
    }

    proptest! {
        #[test]
        fn matches_reference_lru(cap in 1usize..8, ops in prop::collection::vec((any::<bool>(), 0u8..12), 0..400)) {
            let c = MetaCache::new(cap);
            let mut oracle = ListLru { cap, items: Vec::new() };
            let mut version = 0u64;
            for (is_get, k) in ops {
                let path = format!("/k{k}");
                if is_get {
                    prop_assert_eq!(c.get(&p(&path)).is_some(), oracle.get(k));
                } else {
                    version += 1;
                    let ev = c.put(rec(&path, version)).evicted;
                    let expected = oracle.put(k).map(|e| CacheKey::Path(p(&format!("/k{e}"))));
                    prop_assert_eq!(ev, expected);
                }
                let s = c.stats();
                prop_assert!(s.size <= cap);
                prop_assert_eq!(s.hits + s.misses, s.lookups);
            }
        }
    }
}
