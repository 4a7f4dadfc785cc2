use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::meta::ResourcePath;

/// Access pattern `A ? B`: a prefix, one wildcard segment, and a suffix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternPath {
    pub prefix: Vec<String>,
    pub suffix: Vec<String>,
    pub match_count: usize,
}

impl PatternPath {
    pub fn wildcard_index(&self) -> usize {
        self.prefix.len()
    }

    pub fn depth(&self) -> usize {
        self.prefix.len() + 1 + self.suffix.len()
    }

    pub fn prefix_path(&self) -> ResourcePath {
        ResourcePath::root().join_all(&self.prefix)
    }

    pub fn matches(&self, path: &ResourcePath) -> bool {
        let s = path.segments();
        s.len() == self.depth()
            && s[..self.prefix.len()] == self.prefix[..]
            && s[self.prefix.len() + 1..] == self.suffix[..]
    }

    /// `A/<name>/B` as a path.
    pub fn instantiate(&self, name: &str) -> ResourcePath {
        let mut segs = self.prefix.clone();
        segs.push(name.to_string());
        segs.extend(self.suffix.iter().cloned());
        ResourcePath::root().join_all(&segs)
    }

    /// Identity of the pattern regardless of its count, e.g. `/a/?/b`.
    pub fn key_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PatternPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.prefix {
            write!(f, "/{s}")?;
        }
        f.write_str("/?")?;
        for s in &self.suffix {
            write!(f, "/{s}")?;
        }
        Ok(())
    }
}

/// Bounded FIFO of unique paths. Re-inserting a path makes it the newest.
#[derive(Debug, Clone)]
pub struct HistoryWindow {
    capacity: usize,
    items: VecDeque<ResourcePath>,
}

impl HistoryWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ResourcePath> {
        self.items.iter()
    }

    pub fn insert(&mut self, path: ResourcePath) {
        if self.capacity == 0 {
            return;
        }
        if let Some(i) = self.items.iter().position(|p| *p == path) {
            self.items.remove(i);
        }
        self.items.push_back(path);
        if self.items.len() > self.capacity {
            self.items.pop_front();
        }
    }
}

impl FromIterator<ResourcePath> for HistoryWindow {
    /// A window just large enough for the given paths.
    fn from_iter<I: IntoIterator<Item = ResourcePath>>(iter: I) -> Self {
        let items: Vec<ResourcePath> = iter.into_iter().collect();
        let mut w = HistoryWindow::new(items.len());
        for p in items {
            w.insert(p);
        }
        w
    }
}

/// Finds the split of `path` into `A ? B` matched by the most window
/// entries. An entry matches when it has the same depth and agrees with
/// `path` everywhere except possibly at the wildcard. Ties prefer the longest
/// prefix. Returns `None` below `pattern_min` matches, or at or below it
/// when `strict`.
pub fn detect_pattern(
    window: &HistoryWindow,
    path: &ResourcePath,
    pattern_min: usize,
    strict: bool,
) -> Option<PatternPath> {
    let segs = path.segments();
    let depth = segs.len();
    if depth == 0 {
        return None;
    }
    // identical entries match every split; entries differing in exactly one
    // position match only the split with the wildcard there
    let mut everywhere = 0usize;
    let mut at = vec![0usize; depth];
    for w in window.iter() {
        let ws = w.segments();
        if ws.len() != depth {
            continue;
        }
        let mut diff = None;
        let mut n_diff = 0;
        for (i, (a, b)) in ws.iter().zip(segs).enumerate() {
            if a != b {
                n_diff += 1;
                if n_diff > 1 {
                    break;
                }
                diff = Some(i);
            }
        }
        match (n_diff, diff) {
            (0, _) => everywhere += 1,
            (1, Some(i)) => at[i] += 1,
            _ => {}
        }
    }
    let (best_i, best) = at
        .iter()
        .enumerate()
        .map(|(i, &c)| (i, c + everywhere))
        .max_by(|x, y| x.1.cmp(&y.1).then(x.0.cmp(&y.0)))?;
    let accepted = if strict { best > pattern_min } else { best >= pattern_min };
    if !accepted || best == 0 {
        return None;
    }
    Some(PatternPath {
        prefix: segs[..best_i].to_vec(),
        suffix: segs[best_i + 1..].to_vec(),
        match_count: best,
    })
}
