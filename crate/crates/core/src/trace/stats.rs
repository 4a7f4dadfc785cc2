use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::meta::EntryKind;

use super::{reconstruct_tree, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStats {
    pub events: u64,
    pub list_ops: u64,
    pub unique_paths: u64,
    /// Unique listed paths listed exactly once.
    pub once_paths: u64,
    /// `unique_paths / list_ops`.
    pub unique_fraction: f64,
    /// `once_paths / unique_paths`.
    pub once_fraction: f64,
    /// Share of list operations that target a path listed more than once.
    pub repeated_share: f64,
    pub directories: u64,
    pub files: u64,
    /// `(files in a directory, fraction of directories with at most that many)`.
    pub files_per_dir_cdf: Vec<(u64, f64)>,
    /// Same x axis, weighted by files instead of directories.
    pub files_per_dir_weighted_cdf: Vec<(u64, f64)>,
    /// `(directory depth, files directly inside directories at that depth)`.
    pub depth_distribution: Vec<(usize, u64)>,
}

fn frac(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn compute_stats(events: &[TraceEvent]) -> TraceStats {
    let mut counts: HashMap<&crate::meta::ResourcePath, u64> = HashMap::new();
    let mut list_ops = 0;
    for e in events.iter().filter(|e| e.is_list()) {
        list_ops += 1;
        *counts.entry(&e.path).or_default() += 1;
    }
    let unique = counts.len() as u64;
    let once = counts.values().filter(|&&c| c == 1).count() as u64;

    let (tree, _) = reconstruct_tree(events);
    let mut files_in: BTreeMap<crate::meta::ResourcePath, u64> = BTreeMap::new();
    let mut depth: BTreeMap<usize, u64> = BTreeMap::new();
    let mut files = 0;
    for (path, kind, _, _) in tree.walk() {
        match kind {
            EntryKind::Directory => {
                files_in.entry(path).or_default();
            }
            EntryKind::File => {
                files += 1;
                let parent = path.parent().expect("files are never the root");
                *depth.entry(parent.depth()).or_default() += 1;
                *files_in.entry(parent).or_default() += 1;
            }
        }
    }
    let dirs = files_in.len() as u64;
    let mut by_size: BTreeMap<u64, u64> = BTreeMap::new();
    for &n in files_in.values() {
        *by_size.entry(n).or_default() += 1;
    }
    let (mut cd, mut cf) = (0, 0);
    let mut cdf = Vec::with_capacity(by_size.len());
    let mut wcdf = Vec::with_capacity(by_size.len());
    for (&x, &n) in &by_size {
        cd += n;
        cf += n * x;
        cdf.push((x, frac(cd, dirs)));
        wcdf.push((x, frac(cf, files)));
    }

    TraceStats {
        events: events.len() as u64,
        list_ops,
        unique_paths: unique,
        once_paths: once,
        unique_fraction: frac(unique, list_ops),
        once_fraction: frac(once, unique),
        repeated_share: frac(list_ops - once, list_ops),
        directories: dirs,
        files,
        files_per_dir_cdf: cdf,
        files_per_dir_weighted_cdf: wcdf,
        depth_distribution: depth.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::ResourcePath;
    use crate::trace::TraceOp;
    use proptest::prelude::*;

    fn list(s: &str) -> TraceEvent {
        TraceEvent::new(0, TraceOp::ListStatus, ResourcePath::parse(s).unwrap())
    }

    #[test]
    fn hand_counted_fractions() {
        let s = compute_stats(&[list("/a"), list("/a"), list("/b")]);
        assert_eq!((s.list_ops, s.unique_paths, s.once_paths), (3, 2, 1));
        assert!((s.unique_fraction - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.once_fraction - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tree_shape() {
        let s = compute_stats(&[list("/d/f1"), list("/d/f2"), list("/d/e/g"), list("/h")]);
        // directories: /, /d, /d/e
        assert_eq!((s.directories, s.files), (3, 4));
        assert_eq!(s.depth_distribution, [(0, 1), (1, 2), (2, 1)]);
        assert_eq!(s.files_per_dir_cdf.last().unwrap().1, 1.0);
        assert_eq!(s.files_per_dir_weighted_cdf, [(1, 0.5), (2, 1.0)]);
    }

    #[test]
    fn empty_trace() {
        let s = compute_stats(&[]);
        assert_eq!((s.list_ops, s.unique_fraction, s.once_fraction), (0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn fractions_ignore_order(mut ids in prop::collection::vec(0u8..20, 0..60), seed in any::<u64>()) {
            let a: Vec<TraceEvent> = ids.iter().map(|i| list(&format!("/p/{i}"))).collect();
            let n = ids.len();
            if n > 1 {
                let k = (seed as usize) % n;
                ids.rotate_left(k);
                ids.swap(0, n - 1);
            }
            let b: Vec<TraceEvent> = ids.iter().map(|i| list(&format!("/p/{i}"))).collect();
            let (sa, sb) = (compute_stats(&a), compute_stats(&b));
            prop_assert_eq!(sa.unique_fraction, sb.unique_fraction);
            prop_assert_eq!(sa.once_fraction, sb.once_fraction);
            prop_assert!((0.0..=1.0).contains(&sa.unique_fraction) && (0.0..=1.0).contains(&sa.once_fraction));
            let per_depth: u64 = sa.depth_distribution.iter().map(|d| d.1).sum();
            prop_assert_eq!(per_depth, sa.files);
        }
    }
}
