//! Canonical metadata types shared by every layer: paths, records, the
//! binary framing, block splitting and version-gated stores.

mod blocks;
pub mod codec;
mod path;
mod record;
mod store;

pub use blocks::{
    block_key, join_blocks, split_blocks, BlockJoiner, BlockManifest, MetadataBlock,
    DEFAULT_BLOCK_SIZE,
};
pub use codec::{deserialize_record, serialize_record};
pub use path::ResourcePath;
pub use record::{
    resolve_conflict, ChildEntry, ConflictResolution, EntryKind, MetadataRecord, RecordStatus,
};
pub use store::{ConditionalStore, MetaStore, OverwriteOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("invalid path {0:?}")]
    InvalidPath(String),
    #[error("invalid path segment {0:?}")]
    InvalidSegment(String),
    #[error("file record {0} cannot carry children")]
    FileWithChildren(String),
    #[error("block size must be at least 1")]
    InvalidBlockSize,
    #[error("truncated record")]
    Truncated,
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("block mismatch: {0}")]
    BlockMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed 64-bit non-cryptographic digest (xxHash64, seed 0).
pub fn digest_bytes(bytes: &[u8]) -> u64 {
    xxhash_rust::xxh64::xxh64(bytes, 0)
}
