use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::meta::{ChildEntry, EntryKind, MetadataRecord, ResourcePath};

use super::RemoteError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct NodeId(usize);

#[derive(Debug, Clone)]
struct Node {
    name: String,
    kind: EntryKind,
    size_bytes: u64,
    mtime: u64,
    parent: Option<NodeId>,
    children: BTreeMap<String, NodeId>,
}

/// Mutation applied to a [`DirectoryTree`], kept for test assertions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeEvent {
    Mkdir { path: ResourcePath, mtime: u64 },
    Create { path: ResourcePath, mtime: u64 },
    Rename { from: ResourcePath, to: ResourcePath, mtime: u64 },
    Delete { path: ResourcePath, mtime: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    Mkdir(ResourcePath),
    Create { path: ResourcePath, size_bytes: u64 },
    Rename { from: ResourcePath, to: ResourcePath },
    Delete(ResourcePath),
}

/// In-memory mutable directory tree standing in for a remote I/O server.
#[derive(Debug, Clone)]
pub struct DirectoryTree {
    nodes: Vec<Option<Node>>,
    free: Vec<usize>,
    live: usize,
    clock: u64,
    events: Vec<TreeEvent>,
    record_events: bool,
}

impl Default for DirectoryTree {
    fn default() -> Self {
        Self::new()
    }
}

const ROOT: NodeId = NodeId(0);

impl DirectoryTree {
    pub fn new() -> Self {
        Self {
            nodes: vec![Some(Node {
                name: String::new(),
                kind: EntryKind::Directory,
                size_bytes: 0,
                mtime: 0,
                parent: None,
                children: BTreeMap::new(),
            })],
            free: Vec::new(),
            live: 1,
            clock: 0,
            events: Vec::new(),
            record_events: true,
        }
    }

    /// Disables the mutation log (large reconstructed trees).
    pub fn without_event_log(mut self) -> Self {
        self.record_events = false;
        self.events.clear();
        self
    }

    /// Number of nodes including the root.
    pub fn node_count(&self) -> usize {
        self.live
    }

    pub fn events(&self) -> &[TreeEvent] {
        &self.events
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Next version stamp: wall time in ms when it moves forward, otherwise
    /// the logical clock plus one.
    fn next_mtime(&mut self, now_ms: u64) -> u64 {
        self.clock = now_ms.max(self.clock + 1);
        self.clock
    }

    fn node(&self, id: NodeId) -> &Node {
        self.nodes[id.0].as_ref().expect("dangling node id")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id.0].as_mut().expect("dangling node id")
    }

    fn lookup(&self, path: &ResourcePath) -> Option<NodeId> {
        let mut cur = ROOT;
        for seg in path.segments() {
            cur = *self.node(cur).children.get(seg)?;
        }
        Some(cur)
    }

    pub fn exists(&self, path: &ResourcePath) -> bool {
        self.lookup(path).is_some()
    }

    pub fn kind_of(&self, path: &ResourcePath) -> Option<EntryKind> {
        self.lookup(path).map(|id| self.node(id).kind)
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        self.live += 1;
        if let Some(slot) = self.free.pop() {
            self.nodes[slot] = Some(node);
            NodeId(slot)
        } else {
            self.nodes.push(Some(node));
            NodeId(self.nodes.len() - 1)
        }
    }

    fn attach(&mut self, parent: NodeId, name: &str, kind: EntryKind, size: u64, mtime: u64) -> NodeId {
        let id = self.attach_raw(parent, name, kind, size, mtime);
        self.node_mut(parent).mtime = mtime;
        id
    }

    /// Links a new node without stamping the parent.
    fn attach_raw(&mut self, parent: NodeId, name: &str, kind: EntryKind, size: u64, mtime: u64) -> NodeId {
        let id = self.alloc(Node {
            name: name.to_string(),
            kind,
            size_bytes: size,
            mtime,
            parent: Some(parent),
            children: BTreeMap::new(),
        });
        self.node_mut(parent).children.insert(name.to_string(), id);
        id
    }

    fn free_subtree(&mut self, id: NodeId) {
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = self.nodes[n.0].take().expect("dangling node id");
            stack.extend(node.children.values().copied());
            self.free.push(n.0);
            self.live -= 1;
        }
    }

    fn parent_dir(&self, path: &ResourcePath) -> Result<NodeId, RemoteError> {
        let parent = path
            .parent()
            .ok_or_else(|| RemoteError::InvalidMutation("the root cannot be mutated".into()))?;
        let pid = self
            .lookup(&parent)
            .ok_or_else(|| RemoteError::NotFound(parent.to_string()))?;
        if self.node(pid).kind != EntryKind::Directory {
            return Err(RemoteError::InvalidMutation(format!("{parent} is not a directory")));
        }
        Ok(pid)
    }

    pub fn apply(&mut self, m: &Mutation, now_ms: u64) -> Result<TreeEvent, RemoteError> {
        match m {
            Mutation::Mkdir(p) => self.mkdir(p, now_ms),
            Mutation::Create { path, size_bytes } => self.create(path, *size_bytes, now_ms),
            Mutation::Rename { from, to } => self.rename(from, to, now_ms),
            Mutation::Delete(p) => self.delete(p, now_ms),
        }
    }

    pub fn mkdir(&mut self, path: &ResourcePath, now_ms: u64) -> Result<TreeEvent, RemoteError> {
        self.insert_leaf(path, EntryKind::Directory, 0, now_ms)?;
        Ok(self.log(TreeEvent::Mkdir {
            path: path.clone(),
            mtime: self.clock,
        }))
    }

    pub fn create(&mut self, path: &ResourcePath, size: u64, now_ms: u64) -> Result<TreeEvent, RemoteError> {
        self.insert_leaf(path, EntryKind::File, size, now_ms)?;
        Ok(self.log(TreeEvent::Create {
            path: path.clone(),
            mtime: self.clock,
        }))
    }

    fn insert_leaf(&mut self, path: &ResourcePath, kind: EntryKind, size: u64, now_ms: u64) -> Result<(), RemoteError> {
        let pid = self.parent_dir(path)?;
        let name = path.name().expect("non-root");
        if self.node(pid).children.contains_key(name) {
            return Err(RemoteError::AlreadyExists(path.to_string()));
        }
        let mtime = self.next_mtime(now_ms);
        self.attach(pid, name, kind, size, mtime);
        Ok(())
    }

    pub fn rename(&mut self, from: &ResourcePath, to: &ResourcePath, now_ms: u64) -> Result<TreeEvent, RemoteError> {
        let id = self
            .lookup(from)
            .ok_or_else(|| RemoteError::NotFound(from.to_string()))?;
        if id == ROOT {
            return Err(RemoteError::InvalidMutation("the root cannot be renamed".into()));
        }
        if to.starts_with(from) {
            return Err(RemoteError::InvalidMutation(format!("cannot move {from} under itself")));
        }
        let new_parent = self.parent_dir(to)?;
        let new_name = to.name().expect("non-root").to_string();
        if self.node(new_parent).children.contains_key(&new_name) {
            return Err(RemoteError::AlreadyExists(to.to_string()));
        }
        let mtime = self.next_mtime(now_ms);
        let old_parent = self.node(id).parent.expect("non-root has a parent");
        let old_name = self.node(id).name.clone();
        {
            let op = self.node_mut(old_parent);
            op.children.remove(&old_name);
            op.mtime = mtime;
        }
        {
            let np = self.node_mut(new_parent);
            np.children.insert(new_name.clone(), id);
            np.mtime = mtime;
        }
        let n = self.node_mut(id);
        n.name = new_name;
        n.parent = Some(new_parent);
        n.mtime = mtime;
        Ok(self.log(TreeEvent::Rename {
            from: from.clone(),
            to: to.clone(),
            mtime,
        }))
    }

    pub fn delete(&mut self, path: &ResourcePath, now_ms: u64) -> Result<TreeEvent, RemoteError> {
        let id = self
            .lookup(path)
            .ok_or_else(|| RemoteError::NotFound(path.to_string()))?;
        if id == ROOT {
            return Err(RemoteError::InvalidMutation("the root cannot be deleted".into()));
        }
        let mtime = self.next_mtime(now_ms);
        let parent = self.node(id).parent.expect("non-root has a parent");
        let name = self.node(id).name.clone();
        {
            let p = self.node_mut(parent);
            p.children.remove(&name);
            p.mtime = mtime;
        }
        self.free_subtree(id);
        Ok(self.log(TreeEvent::Delete {
            path: path.clone(),
            mtime,
        }))
    }

    fn log(&mut self, ev: TreeEvent) -> TreeEvent {
        if self.record_events {
            self.events.push(ev.clone());
        }
        ev
    }

    /// Creates `path` and any missing ancestors without touching existing
    /// versions. A file that must gain children, or is asked for as a
    /// directory, is turned into one.
    /// Returns how many existing nodes had to be repaired that way.
    pub fn ensure(&mut self, path: &ResourcePath, leaf_kind: EntryKind, now_ms: u64) -> usize {
        let mut repairs = 0;
        let mut cur = ROOT;
        let n = path.depth();
        for (i, seg) in path.segments().iter().enumerate() {
            let is_leaf = i + 1 == n;
            if self.node(cur).kind == EntryKind::File {
                self.node_mut(cur).kind = EntryKind::Directory;
                repairs += 1;
            }
            cur = match self.node(cur).children.get(seg) {
                Some(&c) => c,
                None => {
                    let kind = if is_leaf { leaf_kind } else { EntryKind::Directory };
                    let mtime = self.next_mtime(now_ms);
                    self.attach(cur, seg, kind, 0, mtime)
                }
            };
        }
        if leaf_kind == EntryKind::Directory && self.node(cur).kind == EntryKind::File {
            self.node_mut(cur).kind = EntryKind::Directory;
            repairs += 1;
        }
        repairs
    }

    fn entry_of(&self, id: NodeId) -> ChildEntry {
        let n = self.node(id);
        ChildEntry {
            name: n.name.clone(),
            kind: n.kind,
            size_bytes: n.size_bytes,
            mtime: n.mtime,
        }
    }

    /// Metadata plus listing, or `None` when the path does not exist.
    pub fn list(&self, path: &ResourcePath) -> Option<MetadataRecord> {
        let id = self.lookup(path)?;
        let n = self.node(id);
        Some(match n.kind {
            EntryKind::File => MetadataRecord::file(path.clone(), n.size_bytes, n.mtime),
            EntryKind::Directory => MetadataRecord::directory(
                path.clone(),
                n.mtime,
                n.children.values().map(|&c| self.entry_of(c)).collect(),
            ),
        })
    }

    /// The node's own attributes: (kind, mtime, size).
    pub fn stat(&self, path: &ResourcePath) -> Option<(EntryKind, u64, u64)> {
        let id = self.lookup(path)?;
        let n = self.node(id);
        Some((n.kind, n.mtime, n.size_bytes))
    }

    /// Child names of a directory, sorted.
    pub fn child_names(&self, path: &ResourcePath) -> Option<Vec<String>> {
        let id = self.lookup(path)?;
        Some(self.node(id).children.keys().cloned().collect())
    }

    /// Every path in the tree in depth-first, name-sorted order (root first).
    pub fn walk(&self) -> Vec<(ResourcePath, EntryKind, u64, u64)> {
        let mut out = Vec::with_capacity(self.live);
        let mut stack = vec![(ROOT, ResourcePath::root())];
        while let Some((id, path)) = stack.pop() {
            let n = self.node(id);
            out.push((path.clone(), n.kind, n.mtime, n.size_bytes));
            for (name, &c) in n.children.iter().rev() {
                stack.push((c, path.join_all(std::slice::from_ref(name))));
            }
        }
        out
    }

    /// Writes `kind<TAB>mtime<TAB>size<TAB>path` per node.
    pub fn save_snapshot(&self, file: &Path) -> Result<(), RemoteError> {
        let mut w = BufWriter::new(File::create(file)?);
        for (path, kind, mtime, size) in self.walk() {
            writeln!(w, "{}\t{}\t{}\t{}", kind.letter(), mtime, size, path)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_snapshot(file: &Path) -> Result<Self, RemoteError> {
        let r = BufReader::new(File::open(file)?);
        let mut tree = DirectoryTree::new().without_event_log();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = || RemoteError::Snapshot(format!("line {}: {line:?}", lineno + 1));
            let mut it = line.splitn(4, '\t');
            let kind = it.next().and_then(EntryKind::from_letter).ok_or_else(bad)?;
            let mtime: u64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let size: u64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let path = it
                .next()
                .and_then(|s| ResourcePath::parse(s).ok())
                .ok_or_else(bad)?;
            let id = if path.is_root() {
                ROOT
            } else {
                let pid = tree.lookup(&path.parent().unwrap()).ok_or_else(bad)?;
                tree.attach_raw(pid, path.name().unwrap(), kind, size, mtime)
            };
            let n = tree.node_mut(id);
            n.kind = kind;
            n.mtime = mtime;
            n.size_bytes = size;
            tree.clock = tree.clock.max(mtime);
        }
        tree.record_events = true;
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    fn sample() -> DirectoryTree {
        let mut t = DirectoryTree::new();
        t.mkdir(&p("/a"), 0).unwrap();
        t.mkdir(&p("/a/b"), 0).unwrap();
        t.create(&p("/a/b/x"), 10, 0).unwrap();
        t.create(&p("/a/b/y"), 20, 0).unwrap();
        t
    }

    #[test]
    fn rename_moves_subtree() {
        let mut t = sample();
        t.rename(&p("/a/b"), &p("/a/c"), 0).unwrap();
        assert!(t.list(&p("/a/b")).is_none());
        assert!(t.exists(&p("/a/c/x")));
        assert_eq!(t.child_names(&p("/a")).unwrap(), vec!["c"]);
    }

    #[test]
    fn delete_removes_descendants() {
        let mut t = sample();
        let before = t.node_count();
        t.delete(&p("/a/b"), 0).unwrap();
        assert!(!t.exists(&p("/a/b/x")));
        assert_eq!(t.node_count(), before - 3);
    }

    #[test]
    fn create_then_stat_reports_creation_version() {
        let mut t = sample();
        let ev = t.create(&p("/a/new"), 1, 0).unwrap();
        let TreeEvent::Create { mtime, .. } = ev else { panic!() };
        assert_eq!(t.stat(&p("/a/new")).unwrap().1, mtime);
    }

    #[test]
    fn mutations_strictly_advance_versions() {
        let mut t = sample();
        let before = t.list(&p("/a")).unwrap().mtime();
        t.create(&p("/a/z"), 0, 0).unwrap();
        let after = t.list(&p("/a")).unwrap().mtime();
        assert!(after > before);
        // wall clock going backwards still moves versions forward
        t.create(&p("/a/w"), 0, 5).unwrap();
        t.create(&p("/a/v"), 0, 1).unwrap();
        assert!(t.stat(&p("/a/v")).unwrap().1 > t.stat(&p("/a/w")).unwrap().1);
    }

    #[test]
    fn invalid_mutations_leave_tree_unchanged() {
        let mut t = sample();
        let n = t.node_count();
        assert!(t.create(&p("/nope/x"), 0, 0).is_err());
        assert!(t.delete(&p("/missing"), 0).is_err());
        assert!(t.rename(&p("/a"), &p("/a/b/inner"), 0).is_err());
        assert!(t.mkdir(&p("/a/b/x/under_file"), 0).is_err());
        assert!(t.mkdir(&p("/a/b"), 0).is_err());
        assert_eq!(t.node_count(), n);
    }

    #[test]
    fn snapshot_round_trip() {
        let t = sample();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("tree.tsv");
        t.save_snapshot(&f).unwrap();
        let back = DirectoryTree::load_snapshot(&f).unwrap();
        assert_eq!(back.walk(), t.walk());
    }

    #[test]
    fn ensure_repairs_files_that_gain_children() {
        let mut t = DirectoryTree::new();
        assert_eq!(t.ensure(&p("/a/f"), EntryKind::File, 0), 0);
        assert_eq!(t.ensure(&p("/a/f/g"), EntryKind::File, 0), 1);
        assert_eq!(t.kind_of(&p("/a/f")), Some(EntryKind::Directory));
    }
}
