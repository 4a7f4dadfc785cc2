use serde::{Deserialize, Serialize};

use super::{codec, MetaError, ResourcePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    File,
    Directory,
}

impl EntryKind {
    pub fn code(self) -> u8 {
        match self {
            EntryKind::File => 0,
            EntryKind::Directory => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EntryKind::File),
            1 => Some(EntryKind::Directory),
            _ => None,
        }
    }

    /// Single-letter tag used by the line protocol and snapshot files.
    pub fn letter(self) -> char {
        match self {
            EntryKind::File => 'f',
            EntryKind::Directory => 'd',
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s {
            "f" => Some(EntryKind::File),
            "d" => Some(EntryKind::Directory),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Live,
    Deleted,
}

/// One entry of a directory listing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChildEntry {
    pub name: String,
    pub kind: EntryKind,
    pub size_bytes: u64,
    pub mtime: u64,
}

/// Metadata of one path plus its listing. The digest is derived from the
/// serialized form and is recomputed whenever a record is constructed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MetadataRecord {
    path: ResourcePath,
    kind: EntryKind,
    size_bytes: u64,
    mtime: u64,
    children: Vec<ChildEntry>,
    status: RecordStatus,
    digest: u64,
}

impl MetadataRecord {
    pub fn new(
        path: ResourcePath,
        kind: EntryKind,
        size_bytes: u64,
        mtime: u64,
        children: Vec<ChildEntry>,
        status: RecordStatus,
    ) -> Result<Self, MetaError> {
        if kind == EntryKind::File && !children.is_empty() {
            return Err(MetaError::FileWithChildren(path.to_string()));
        }
        let mut rec = Self {
            path,
            kind,
            size_bytes,
            mtime,
            children,
            status,
            digest: 0,
        };
        rec.digest = super::digest_bytes(&codec::serialize_record(&rec));
        Ok(rec)
    }

    pub fn file(path: ResourcePath, size_bytes: u64, mtime: u64) -> Self {
        Self::new(path, EntryKind::File, size_bytes, mtime, Vec::new(), RecordStatus::Live)
            .expect("files carry no children")
    }

    pub fn directory(path: ResourcePath, mtime: u64, children: Vec<ChildEntry>) -> Self {
        Self::new(path, EntryKind::Directory, 0, mtime, children, RecordStatus::Live)
            .expect("directories may carry children")
    }

    /// The same record with `status = deleted`, keeping the version so any
    /// strictly newer fetch replaces the marker.
    pub fn deleted_marker(&self) -> Self {
        let mut rec = self.clone();
        rec.status = RecordStatus::Deleted;
        rec.digest = super::digest_bytes(&codec::serialize_record(&rec));
        rec
    }

    /// A deleted marker for a path that was never cached.
    pub fn tombstone(path: ResourcePath, mtime: u64) -> Self {
        Self::new(path, EntryKind::File, 0, mtime, Vec::new(), RecordStatus::Deleted)
            .expect("tombstones carry no children")
    }

    pub fn path(&self) -> &ResourcePath {
        &self.path
    }
    pub fn kind(&self) -> EntryKind {
        self.kind
    }
    pub fn size_bytes(&self) -> u64 {
        self.size_bytes
    }
    pub fn mtime(&self) -> u64 {
        self.mtime
    }
    pub fn children(&self) -> &[ChildEntry] {
        &self.children
    }
    pub fn status(&self) -> RecordStatus {
        self.status
    }
    pub fn is_live(&self) -> bool {
        self.status == RecordStatus::Live
    }
    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// Position of `name` in the listing, if present.
    pub fn child_index(&self, name: &str) -> Option<usize> {
        self.children.iter().position(|c| c.name == name)
    }
}

/// Outcome of version-gated writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictResolution {
    AcceptIncoming,
    KeepCached,
}

/// Accepts the incoming record only when nothing is cached or its version is
/// strictly newer. Equal versions keep the cached copy.
pub fn resolve_conflict(
    cached: Option<&MetadataRecord>,
    incoming: &MetadataRecord,
) -> ConflictResolution {
    match cached {
        None => ConflictResolution::AcceptIncoming,
        Some(c) if incoming.mtime() > c.mtime() => ConflictResolution::AcceptIncoming,
        Some(_) => ConflictResolution::KeepCached,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    #[test]
    fn file_with_children_rejected() {
        let child = ChildEntry {
            name: "x".into(),
            kind: EntryKind::File,
            size_bytes: 1,
            mtime: 1,
        };
        assert!(MetadataRecord::new(
            p("/f"),
            EntryKind::File,
            0,
            1,
            vec![child],
            RecordStatus::Live
        )
        .is_err());
    }

    #[test]
    fn conflict_resolution_by_version() {
        let cached = MetadataRecord::file(p("/a"), 0, 100);
        let newer = MetadataRecord::file(p("/a"), 0, 110);
        let older = MetadataRecord::file(p("/a"), 0, 90);
        let same = MetadataRecord::file(p("/a"), 5, 100);
        assert_eq!(resolve_conflict(Some(&cached), &newer), ConflictResolution::AcceptIncoming);
        assert_eq!(resolve_conflict(Some(&cached), &older), ConflictResolution::KeepCached);
        assert_eq!(resolve_conflict(Some(&cached), &same), ConflictResolution::KeepCached);
        assert_eq!(resolve_conflict(None, &older), ConflictResolution::AcceptIncoming);
    }

    #[test]
    fn deleted_marker_changes_digest_not_version() {
        let r = MetadataRecord::directory(p("/a"), 7, vec![]);
        let d = r.deleted_marker();
        assert_eq!(d.mtime(), 7);
        assert_eq!(d.status(), RecordStatus::Deleted);
        assert_ne!(d.digest(), r.digest());
    }
}
