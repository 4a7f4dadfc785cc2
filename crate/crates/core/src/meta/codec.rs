//! Length-prefixed binary framing for [`MetadataRecord`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! u32 field_count
//! repeated field_count times:
//!     u8  tag
//!     u32 len
//!     [u8; len] body
//! ```
//!
//! Tags 1..=5 appear once each, in order: path (UTF-8), kind (u8), size
//! (u64), mtime (u64), status (u8). They are followed by one tag-6 field per
//! child: `u8 kind, u64 size, u64 mtime, name bytes`. Children come last so
//! that any prefix of the byte stream decodes to a prefix of the listing.
//! The digest is not part of the framing; it is recomputed on decode.

use super::{ChildEntry, EntryKind, MetaError, MetadataRecord, RecordStatus, ResourcePath};

const TAG_PATH: u8 = 1;
const TAG_KIND: u8 = 2;
const TAG_SIZE: u8 = 3;
const TAG_MTIME: u8 = 4;
const TAG_STATUS: u8 = 5;
const TAG_CHILD: u8 = 6;
const HEADER_FIELDS: u32 = 5;

fn put_field(out: &mut Vec<u8>, tag: u8, body: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
}

pub fn serialize_record(rec: &MetadataRecord) -> Vec<u8> {
    let children = rec.children();
    let mut out = Vec::with_capacity(64 + children.len() * 32);
    out.extend_from_slice(&(HEADER_FIELDS + children.len() as u32).to_le_bytes());
    put_field(&mut out, TAG_PATH, rec.path().to_string().as_bytes());
    put_field(&mut out, TAG_KIND, &[rec.kind().code()]);
    put_field(&mut out, TAG_SIZE, &rec.size_bytes().to_le_bytes());
    put_field(&mut out, TAG_MTIME, &rec.mtime().to_le_bytes());
    let status = match rec.status() {
        RecordStatus::Live => 0u8,
        RecordStatus::Deleted => 1u8,
    };
    put_field(&mut out, TAG_STATUS, &[status]);
    let mut body = Vec::new();
    for c in children {
        body.clear();
        body.push(c.kind.code());
        body.extend_from_slice(&c.size_bytes.to_le_bytes());
        body.extend_from_slice(&c.mtime.to_le_bytes());
        body.extend_from_slice(c.name.as_bytes());
        put_field(&mut out, TAG_CHILD, &body);
    }
    out
}

/// Header fields decoded from a (possibly partial) byte stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub path: ResourcePath,
    pub kind: EntryKind,
    pub size_bytes: u64,
    pub mtime: u64,
    pub status: RecordStatus,
}

/// Result of decoding as many complete fields as a byte prefix contains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialRecord {
    pub header: Option<RecordHeader>,
    pub children: Vec<ChildEntry>,
    pub expected_fields: Option<u32>,
    pub consumed: usize,
    pub complete: bool,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.remaining() < n {
            return None;
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    /// Reads one whole field, or rewinds and returns `None` if truncated.
    fn field(&mut self) -> Option<(u8, &'a [u8])> {
        let start = self.pos;
        let tag = match self.take(1) {
            Some(t) => t[0],
            None => return None,
        };
        let len = match self.u32() {
            Some(l) => l as usize,
            None => {
                self.pos = start;
                return None;
            }
        };
        match self.take(len) {
            Some(body) => Some((tag, body)),
            None => {
                self.pos = start;
                None
            }
        }
    }
}

fn u64_body(tag: u8, body: &[u8]) -> Result<u64, MetaError> {
    let arr: [u8; 8] = body
        .try_into()
        .map_err(|_| MetaError::Malformed(format!("tag {tag}: expected 8 bytes")))?;
    Ok(u64::from_le_bytes(arr))
}

fn u8_body(tag: u8, body: &[u8]) -> Result<u8, MetaError> {
    match body {
        [b] => Ok(*b),
        _ => Err(MetaError::Malformed(format!("tag {tag}: expected 1 byte"))),
    }
}

fn decode_child(body: &[u8]) -> Result<ChildEntry, MetaError> {
    if body.len() < 17 {
        return Err(MetaError::Malformed("child entry too short".into()));
    }
    let kind = EntryKind::from_code(body[0])
        .ok_or_else(|| MetaError::Malformed(format!("unknown kind {}", body[0])))?;
    let size_bytes = u64::from_le_bytes(body[1..9].try_into().unwrap());
    let mtime = u64::from_le_bytes(body[9..17].try_into().unwrap());
    let name = std::str::from_utf8(&body[17..])
        .map_err(|_| MetaError::Malformed("child name is not UTF-8".into()))?
        .to_string();
    Ok(ChildEntry {
        name,
        kind,
        size_bytes,
        mtime,
    })
}

/// Decodes every complete field in `bytes`. Truncation is not an error;
/// structurally invalid fields are.
pub fn decode_prefix(bytes: &[u8]) -> Result<PartialRecord, MetaError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let mut out = PartialRecord {
        header: None,
        children: Vec::new(),
        expected_fields: None,
        consumed: 0,
        complete: false,
    };
    let Some(count) = cur.u32() else {
        return Ok(out);
    };
    if count < HEADER_FIELDS {
        return Err(MetaError::Malformed(format!("field count {count} < {HEADER_FIELDS}")));
    }
    out.expected_fields = Some(count);
    out.consumed = cur.pos;

    let mut path = None;
    let mut kind = None;
    let mut size = None;
    let mut mtime = None;
    let mut seen = 0u32;
    while seen < count {
        let Some((tag, body)) = cur.field() else {
            break;
        };
        let expected_tag = if seen < HEADER_FIELDS {
            seen as u8 + 1
        } else {
            TAG_CHILD
        };
        if tag != expected_tag {
            return Err(MetaError::Malformed(format!(
                "field {seen}: expected tag {expected_tag}, found {tag}"
            )));
        }
        match tag {
            TAG_PATH => {
                let s = std::str::from_utf8(body)
                    .map_err(|_| MetaError::Malformed("path is not UTF-8".into()))?;
                path = Some(ResourcePath::parse(s)?);
            }
            TAG_KIND => {
                let code = u8_body(tag, body)?;
                kind = Some(
                    EntryKind::from_code(code)
                        .ok_or_else(|| MetaError::Malformed(format!("unknown kind {code}")))?,
                );
            }
            TAG_SIZE => size = Some(u64_body(tag, body)?),
            TAG_MTIME => mtime = Some(u64_body(tag, body)?),
            TAG_STATUS => {
                let status = match u8_body(tag, body)? {
                    0 => RecordStatus::Live,
                    1 => RecordStatus::Deleted,
                    other => {
                        return Err(MetaError::Malformed(format!("unknown status {other}")))
                    }
                };
                out.header = Some(RecordHeader {
                    path: path.take().unwrap(),
                    kind: kind.unwrap(),
                    size_bytes: size.unwrap(),
                    mtime: mtime.unwrap(),
                    status,
                });
            }
            _ => out.children.push(decode_child(body)?),
        }
        seen += 1;
        out.consumed = cur.pos;
    }
    out.complete = seen == count;
    Ok(out)
}

pub fn deserialize_record(bytes: &[u8]) -> Result<MetadataRecord, MetaError> {
    let partial = decode_prefix(bytes)?;
    if !partial.complete {
        return Err(MetaError::Truncated);
    }
    if partial.consumed != bytes.len() {
        return Err(MetaError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - partial.consumed
        )));
    }
    let h = partial.header.expect("complete records carry a header");
    MetadataRecord::new(h.path, h.kind, h.size_bytes, h.mtime, partial.children, h.status)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    fn child(i: usize) -> ChildEntry {
        ChildEntry {
            name: format!("c{i:06}"),
            kind: if i % 3 == 0 { EntryKind::Directory } else { EntryKind::File },
            size_bytes: i as u64 * 7,
            mtime: 1_000 + i as u64,
        }
    }

    #[test]
    fn empty_directory_round_trip() {
        let r = MetadataRecord::directory(p("/a/b"), 3, vec![]);
        let back = deserialize_record(&serialize_record(&r)).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.digest(), r.digest());
    }

    #[test]
    fn hundred_thousand_children_round_trip() {
        let children: Vec<ChildEntry> = (0..100_000).map(child).collect();
        let r = MetadataRecord::directory(p("/big"), 42, children.clone());
        let bytes = serialize_record(&r);
        let back = deserialize_record(&bytes).unwrap();
        assert_eq!(back.children().len(), 100_000);
        for (a, b) in back.children().iter().zip(children.iter()) {
            assert_eq!(a, b);
        }
        assert_eq!(back.path(), r.path());
        assert_eq!(back.mtime(), 42);
        assert_eq!(serialize_record(&back), bytes);
    }

    #[test]
    fn mtime_changes_serialization() {
        let a = MetadataRecord::file(p("/f"), 10, 1);
        let b = MetadataRecord::file(p("/f"), 10, 2);
        assert_ne!(serialize_record(&a), serialize_record(&b));
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn prefix_decodes_prefix_of_children() {
        let r = MetadataRecord::directory(p("/d"), 1, (0..50).map(child).collect());
        let bytes = serialize_record(&r);
        let mut last = 0;
        for cut in (0..bytes.len()).step_by(13) {
            let part = decode_prefix(&bytes[..cut]).unwrap();
            assert!(part.children.len() >= last);
            assert_eq!(&part.children[..], &r.children()[..part.children.len()]);
            last = part.children.len();
            assert!(!part.complete);
        }
        assert!(decode_prefix(&bytes).unwrap().complete);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(deserialize_record(&[]), Err(MetaError::Truncated)));
        let r = MetadataRecord::file(p("/f"), 1, 1);
        let mut bytes = serialize_record(&r);
        bytes[4] = 9;
        assert!(deserialize_record(&bytes).is_err());
        let mut bytes = serialize_record(&r);
        bytes.push(0);
        assert!(deserialize_record(&bytes).is_err());
    }
}
