//! Fixed-size block splitting of serialized records, with a flat manifest.

use serde::{Deserialize, Serialize};

use super::codec::{self, PartialRecord};
use super::{MetaError, MetadataRecord};

pub const DEFAULT_BLOCK_SIZE: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataBlock {
    pub owner_key: u64,
    pub index: u32,
    pub total: u32,
    pub payload: Vec<u8>,
}

impl MetadataBlock {
    pub fn block_key(&self) -> String {
        block_key(self.owner_key, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockManifest {
    pub owner_key: u64,
    pub total: u32,
    pub block_keys: Vec<String>,
    pub serialized_len: u64,
}

/// URI-style identifier of one block: `<owner hex>/<index>`.
pub fn block_key(owner_key: u64, index: u32) -> String {
    format!("{owner_key:016x}/{index}")
}

pub fn split_blocks(
    record: &MetadataRecord,
    block_size: usize,
) -> Result<(BlockManifest, Vec<MetadataBlock>), MetaError> {
    if block_size == 0 {
        return Err(MetaError::InvalidBlockSize);
    }
    let bytes = codec::serialize_record(record);
    let owner_key = record.path().key();
    let total = bytes.len().div_ceil(block_size) as u32;
    let blocks: Vec<MetadataBlock> = bytes
        .chunks(block_size)
        .enumerate()
        .map(|(i, chunk)| MetadataBlock {
            owner_key,
            index: i as u32,
            total,
            payload: chunk.to_vec(),
        })
        .collect();
    let manifest = BlockManifest {
        owner_key,
        total,
        block_keys: blocks.iter().map(MetadataBlock::block_key).collect(),
        serialized_len: bytes.len() as u64,
    };
    Ok((manifest, blocks))
}

/// Reassembles a record. Blocks may be supplied in any order.
pub fn join_blocks(
    manifest: &BlockManifest,
    blocks: &[MetadataBlock],
) -> Result<MetadataRecord, MetaError> {
    let mut joiner = BlockJoiner::new(manifest.clone());
    let mut sorted: Vec<&MetadataBlock> = blocks.iter().collect();
    sorted.sort_by_key(|b| b.index);
    for b in sorted {
        joiner.push(b)?;
    }
    joiner.finish()
}

/// Incremental reassembly: blocks arrive in index order and the listing
/// decoded so far is available after every push.
#[derive(Debug)]
pub struct BlockJoiner {
    manifest: BlockManifest,
    next_index: u32,
    bytes: Vec<u8>,
}

impl BlockJoiner {
    pub fn new(manifest: BlockManifest) -> Self {
        let cap = manifest.serialized_len as usize;
        Self {
            manifest,
            next_index: 0,
            bytes: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, block: &MetadataBlock) -> Result<(), MetaError> {
        if block.owner_key != self.manifest.owner_key {
            return Err(MetaError::BlockMismatch(format!(
                "block {} belongs to another record",
                block.block_key()
            )));
        }
        if block.total != self.manifest.total {
            return Err(MetaError::BlockMismatch(format!(
                "block {} reports {} blocks, manifest has {}",
                block.block_key(),
                block.total,
                self.manifest.total
            )));
        }
        if block.index != self.next_index {
            return Err(MetaError::BlockMismatch(format!(
                "expected block {}, got {}",
                self.next_index, block.index
            )));
        }
        self.bytes.extend_from_slice(&block.payload);
        if self.bytes.len() as u64 > self.manifest.serialized_len {
            return Err(MetaError::BlockMismatch("payload exceeds manifest length".into()));
        }
        self.next_index += 1;
        Ok(())
    }

    pub fn received(&self) -> u32 {
        self.next_index
    }

    /// Whatever the received prefix decodes to.
    pub fn partial(&self) -> Result<PartialRecord, MetaError> {
        codec::decode_prefix(&self.bytes)
    }

    pub fn finish(self) -> Result<MetadataRecord, MetaError> {
        if self.next_index != self.manifest.total
            || self.bytes.len() as u64 != self.manifest.serialized_len
        {
            return Err(MetaError::BlockMismatch(format!(
                "have {} of {} blocks",
                self.next_index, self.manifest.total
            )));
        }
        codec::deserialize_record(&self.bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::{ChildEntry, EntryKind, ResourcePath};

    fn dir_with(n: usize) -> MetadataRecord {
        let children = (0..n)
            .map(|i| ChildEntry {
                name: format!("part-{i:05}"),
                kind: EntryKind::File,
                size_bytes: i as u64,
                mtime: 5,
            })
            .collect();
        MetadataRecord::directory(ResourcePath::parse("/data/x").unwrap(), 9, children)
    }

    #[test]
    fn block_lengths_follow_arithmetic() {
        let r = dir_with(60);
        let len = codec::serialize_record(&r).len();
        let bs = len / 2 + 1;
        let (m, blocks) = split_blocks(&r, bs).unwrap();
        assert_eq!(m.total as usize, len.div_ceil(bs));
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].payload.len(), bs);
        assert_eq!(blocks[1].payload.len(), len - bs);
        assert_eq!(m.block_keys.len(), 2);
    }

    #[test]
    fn exact_multiple_has_no_empty_tail() {
        let r = dir_with(10);
        let len = codec::serialize_record(&r).len();
        let (m, blocks) = split_blocks(&r, len).unwrap();
        assert_eq!(m.total, 1);
        assert_eq!(blocks[0].payload.len(), len);
        assert_eq!(join_blocks(&m, &blocks).unwrap(), r);
    }

    #[test]
    fn zero_block_size_rejected() {
        assert!(split_blocks(&dir_with(1), 0).is_err());
    }

    #[test]
    fn incremental_join_exposes_listing_prefix() {
        let r = dir_with(200);
        let (m, blocks) = split_blocks(&r, 256).unwrap();
        let mut j = BlockJoiner::new(m);
        let mut seen = 0;
        for b in &blocks {
            j.push(b).unwrap();
            let part = j.partial().unwrap();
            assert!(part.children.len() >= seen);
            seen = part.children.len();
        }
        assert_eq!(j.finish().unwrap(), r);
    }

    #[test]
    fn missing_or_foreign_blocks_fail() {
        let r = dir_with(100);
        let (m, mut blocks) = split_blocks(&r, 128).unwrap();
        let last = blocks.pop().unwrap();
        assert!(join_blocks(&m, &blocks).is_err());
        let mut foreign = last.clone();
        foreign.owner_key ^= 1;
        blocks.push(foreign);
        assert!(join_blocks(&m, &blocks).is_err());
    }
}
