use crate::meta::{EntryKind, ResourcePath};
use crate::remote::{DirectoryTree, Mutation};

use super::TraceEvent;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReconstructStats {
    pub hints: u64,
    pub mutations: u64,
    /// Writes on paths never seen before, created first and then mutated.
    pub repairs: u64,
    /// Files turned into directories because a deeper path appeared.
    pub conversions: u64,
    /// Writes that still could not apply (e.g. rename onto an existing path).
    pub rejected: u64,
}

/// Rebuilds the traced namespace: non-writes create their path (and any
/// ancestors), writes are applied in order.
pub fn reconstruct_tree<'a>(events: impl IntoIterator<Item = &'a TraceEvent>) -> (DirectoryTree, ReconstructStats) {
    let mut tree = DirectoryTree::new().without_event_log();
    let mut st = ReconstructStats::default();
    for ev in events {
        let now = ev.timestamp_ms;
        let Some(m) = ev.mutation() else {
            st.hints += 1;
            st.conversions += tree.ensure(&ev.path, EntryKind::File, now) as u64;
            continue;
        };
        st.mutations += 1;
        let (source, target) = match &m {
            Mutation::Rename { from, to } => (Some(from), Some(to)),
            Mutation::Delete(p) => (Some(p), None),
            Mutation::Mkdir(p) | Mutation::Create { path: p, .. } => (None, Some(p)),
        };
        if let Some(src) = source.filter(|s| !tree.exists(s)) {
            st.repairs += 1;
            st.conversions += tree.ensure(src, EntryKind::File, now) as u64;
        }
        if let Some(parent) = target.and_then(ResourcePath::parent) {
            st.conversions += tree.ensure(&parent, EntryKind::Directory, now) as u64;
        }
        if source.is_none() && target.is_some_and(|t| tree.exists(t)) {
            continue;
        }
        if let Err(e) = tree.apply(&m, now) {
            log::debug!("cannot apply {m:?}: {e}");
            st.rejected += 1;
        }
    }
    (tree, st)
}

/// Namespace as it stood before the trace started: every path the trace
/// touches, with writes left for the replay to apply.
pub fn initial_tree<'a>(events: impl IntoIterator<Item = &'a TraceEvent>) -> DirectoryTree {
    let mut tree = DirectoryTree::new().without_event_log();
    for ev in events {
        match ev.mutation() {
            None => {
                tree.ensure(&ev.path, EntryKind::File, 0);
            }
            Some(Mutation::Rename { from, to }) => {
                tree.ensure(&from, EntryKind::File, 0);
                if let Some(p) = to.parent() {
                    tree.ensure(&p, EntryKind::Directory, 0);
                }
            }
            Some(Mutation::Delete(p)) => {
                tree.ensure(&p, EntryKind::File, 0);
            }
            Some(Mutation::Mkdir(p) | Mutation::Create { path: p, .. }) => {
                if let Some(parent) = p.parent() {
                    tree.ensure(&parent, EntryKind::Directory, 0);
                }
            }
        }
    }
    tree
}
