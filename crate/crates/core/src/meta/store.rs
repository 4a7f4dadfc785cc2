use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use dashmap::mapref::entry::Entry;
use dashmap::DashMap;

use super::{codec, resolve_conflict, ConflictResolution, MetaError, MetadataRecord, ResourcePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverwriteOutcome {
    Applied,
    LostRace,
}

/// Stores that can replace a record only if its digest still matches.
pub trait ConditionalStore {
    fn conditional_overwrite(
        &mut self,
        key: &ResourcePath,
        expected_digest: u64,
        new_record: MetadataRecord,
    ) -> OverwriteOutcome;
}

/// Concurrent key-value metadata store with per-key linearizable updates.
#[derive(Debug, Default)]
pub struct MetaStore {
    map: DashMap<ResourcePath, MetadataRecord>,
}

impl MetaStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, key: &ResourcePath) -> Option<MetadataRecord> {
        self.map.get(key).map(|r| r.clone())
    }

    /// Version-gated write. Returns whichever record is stored afterwards.
    pub fn put_versioned(&self, record: MetadataRecord) -> (ConflictResolution, MetadataRecord) {
        match self.map.entry(record.path().clone()) {
            Entry::Vacant(v) => {
                v.insert(record.clone());
                (ConflictResolution::AcceptIncoming, record)
            }
            Entry::Occupied(mut o) => match resolve_conflict(Some(o.get()), &record) {
                ConflictResolution::AcceptIncoming => {
                    o.insert(record.clone());
                    (ConflictResolution::AcceptIncoming, record)
                }
                ConflictResolution::KeepCached => (ConflictResolution::KeepCached, o.get().clone()),
            },
        }
    }

    /// Atomic compare-digest-and-swap on one key.
    pub fn conditional_overwrite(
        &self,
        key: &ResourcePath,
        expected_digest: u64,
        new_record: MetadataRecord,
    ) -> OverwriteOutcome {
        match self.map.get_mut(key) {
            Some(mut cur) if cur.digest() == expected_digest => {
                *cur = new_record;
                OverwriteOutcome::Applied
            }
            _ => OverwriteOutcome::LostRace,
        }
    }

    /// Writes every record as `u32 length + framed record`, sorted by path.
    pub fn save(&self, path: &Path) -> Result<(), MetaError> {
        let mut records: Vec<MetadataRecord> = self.map.iter().map(|r| r.clone()).collect();
        records.sort_by(|a, b| a.path().cmp(b.path()));
        let mut w = BufWriter::new(File::create(path)?);
        for r in &records {
            let bytes = codec::serialize_record(r);
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(&bytes)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MetaError> {
        let mut r = BufReader::new(File::open(path)?);
        let store = Self::new();
        let mut len_buf = [0u8; 4];
        loop {
            match r.read_exact(&mut len_buf) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let mut buf = vec![0u8; u32::from_le_bytes(len_buf) as usize];
            r.read_exact(&mut buf)?;
            let rec = codec::deserialize_record(&buf)?;
            store.map.insert(rec.path().clone(), rec);
        }
        Ok(store)
    }
}

impl ConditionalStore for MetaStore {
    fn conditional_overwrite(
        &mut self,
        key: &ResourcePath,
        expected_digest: u64,
        new_record: MetadataRecord,
    ) -> OverwriteOutcome {
        MetaStore::conditional_overwrite(self, key, expected_digest, new_record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Barrier};

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    #[test]
    fn overwrite_requires_matching_digest() {
        let store = MetaStore::new();
        let r = MetadataRecord::file(p("/a"), 1, 10);
        store.put_versioned(r.clone());
        let other = MetadataRecord::file(p("/a"), 2, 11);
        assert_eq!(
            store.conditional_overwrite(&p("/a"), r.digest() ^ 1, other.clone()),
            OverwriteOutcome::LostRace
        );
        assert_eq!(store.get(&p("/a")).unwrap(), r);
        assert_eq!(
            store.conditional_overwrite(&p("/a"), r.digest(), other.clone()),
            OverwriteOutcome::Applied
        );
        assert_eq!(store.get(&p("/a")).unwrap(), other);
        assert_eq!(
            store.conditional_overwrite(&p("/missing"), 0, other),
            OverwriteOutcome::LostRace
        );
    }

    #[test]
    fn versioned_put_never_regresses() {
        let store = MetaStore::new();
        for m in [5u64, 3, 9, 9, 1, 12, 4] {
            store.put_versioned(MetadataRecord::file(p("/k"), m, m));
        }
        assert_eq!(store.get(&p("/k")).unwrap().mtime(), 12);
    }

    #[test]
    fn eight_writers_one_winner() {
        for _ in 0..200 {
            let store = Arc::new(MetaStore::new());
            let base = MetadataRecord::file(p("/x"), 0, 1);
            store.put_versioned(base.clone());
            let barrier = Arc::new(Barrier::new(8));
            let handles: Vec<_> = (0..8)
                .map(|i| {
                    let store = store.clone();
                    let barrier = barrier.clone();
                    let digest = base.digest();
                    std::thread::spawn(move || {
                        barrier.wait();
                        store.conditional_overwrite(
                            &p("/x"),
                            digest,
                            MetadataRecord::file(p("/x"), i, 2 + i),
                        )
                    })
                })
                .collect();
            let applied = handles
                .into_iter()
                .map(|h| h.join().unwrap())
                .filter(|o| *o == OverwriteOutcome::Applied)
                .count();
            assert_eq!(applied, 1);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("store.bin");
        let store = MetaStore::new();
        store.put_versioned(MetadataRecord::file(p("/a/f"), 3, 4));
        store.put_versioned(MetadataRecord::directory(p("/a"), 5, vec![]));
        store.save(&file).unwrap();
        let back = MetaStore::load(&file).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get(&p("/a/f")), store.get(&p("/a/f")));
    }
}
