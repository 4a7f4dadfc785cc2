//! Inter-layer wire frames. Every frame carries the 64-bit context id that
//! the receiving side uses to find the waiters of a request.
//!
//! ```text
//! request:  u64 ctx | i32 priority | u32 ttl | u8 force_refresh | u8 origin
//!           | str path | u8 has_fanout [u32 limit | opt-str start_after
//!           | u32 n | n * str suffix]
//! response: u64 ctx | u8 status (0 record, 1 deleted, 2 failed)
//!           | u32 len | body (record framing or UTF-8 message)
//! ```
//!
//! Integers are little-endian; `str` is a u32 length plus UTF-8 bytes.

use crate::meta::{deserialize_record, serialize_record, ResourcePath};
use crate::predict::Fanout;

use super::{FetchResult, Origin, PrefetchRequest};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad frame: {0}")]
pub struct FrameError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestFrame {
    pub ctx: u64,
    pub request: PrefetchRequest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseFrame {
    pub ctx: u64,
    pub result: FetchResult,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.buf.len() < n {
            return Err(FrameError(format!("need {n} bytes, have {}", self.buf.len())));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<&'a str, FrameError> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|e| FrameError(e.to_string()))
    }

    fn end(&self) -> Result<(), FrameError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(FrameError(format!("{} trailing bytes", self.buf.len())))
        }
    }
}

impl RequestFrame {
    pub fn encode(&self) -> Vec<u8> {
        let r = &self.request;
        let mut out = Vec::with_capacity(64);
        out.extend_from_slice(&self.ctx.to_le_bytes());
        out.extend_from_slice(&r.priority.to_le_bytes());
        out.extend_from_slice(&r.ttl.to_le_bytes());
        out.push(r.force_refresh as u8);
        out.push(r.origin.code());
        put_str(&mut out, &r.path.to_string());
        match &r.fanout {
            None => out.push(0),
            Some(f) => {
                out.push(1);
                out.extend_from_slice(&(f.limit as u32).to_le_bytes());
                match &f.start_after {
                    None => out.push(0),
                    Some(s) => {
                        out.push(1);
                        put_str(&mut out, s);
                    }
                }
                out.extend_from_slice(&(f.suffix.len() as u32).to_le_bytes());
                for s in &f.suffix {
                    put_str(&mut out, s);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut c = Cursor { buf: bytes };
        let ctx = c.u64()?;
        let priority = c.u32()? as i32;
        let ttl = c.u32()?;
        let force_refresh = match c.u8()? {
            0 => false,
            1 => true,
            b => return Err(FrameError(format!("flag byte {b}"))),
        };
        let origin = Origin::from_code(c.u8()?).ok_or_else(|| FrameError("origin".into()))?;
        let path = ResourcePath::parse(c.str()?).map_err(|e| FrameError(e.to_string()))?;
        let fanout = match c.u8()? {
            0 => None,
            1 => {
                let limit = c.u32()? as usize;
                let start_after = match c.u8()? {
                    0 => None,
                    1 => Some(c.str()?.to_string()),
                    b => return Err(FrameError(format!("option byte {b}"))),
                };
                let n = c.u32()? as usize;
                let mut suffix = Vec::with_capacity(n.min(64));
                for _ in 0..n {
                    suffix.push(c.str()?.to_string());
                }
                Some(Fanout {
                    suffix,
                    start_after,
                    limit,
                })
            }
            b => return Err(FrameError(format!("option byte {b}"))),
        };
        c.end()?;
        Ok(Self {
            ctx,
            request: PrefetchRequest {
                path,
                priority,
                ttl,
                force_refresh,
                origin,
                fanout,
            },
        })
    }
}

impl ResponseFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.extend_from_slice(&self.ctx.to_le_bytes());
        let (status, body) = match &self.result {
            FetchResult::Record(r) => (0u8, serialize_record(r)),
            FetchResult::Deleted => (1, Vec::new()),
            FetchResult::Failed(m) => (2, m.as_bytes().to_vec()),
        };
        out.push(status);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut c = Cursor { buf: bytes };
        let ctx = c.u64()?;
        let status = c.u8()?;
        let n = c.u32()? as usize;
        let body = c.take(n)?;
        c.end()?;
        let result = match status {
            0 => FetchResult::Record(deserialize_record(body).map_err(|e| FrameError(e.to_string()))?),
            1 if body.is_empty() => FetchResult::Deleted,
            2 => FetchResult::Failed(String::from_utf8(body.to_vec()).map_err(|e| FrameError(e.to_string()))?),
            s => return Err(FrameError(format!("status {s}"))),
        };
        Ok(Self { ctx, result })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::{ChildEntry, EntryKind, MetadataRecord};
    use proptest::prelude::*;

    fn arb_seg() -> impl Strategy<Value = String> {
        "[a-z0-9._-]{1,8}".prop_filter("dots", |s| s != "." && s != "..")
    }

    fn arb_path() -> impl Strategy<Value = ResourcePath> {
        prop::collection::vec(arb_seg(), 0..5).prop_map(|s| ResourcePath::from_segments(s).unwrap())
    }

    fn arb_request() -> impl Strategy<Value = PrefetchRequest> {
        let fanout = prop::option::of(
            (
                prop::collection::vec(arb_seg(), 0..3),
                prop::option::of(arb_seg()),
                0usize..5000,
            )
                .prop_map(|(suffix, start_after, limit)| Fanout {
                    suffix,
                    start_after,
                    limit,
                }),
        );
        (arb_path(), any::<i32>(), any::<u32>(), any::<bool>(), 0u8..4, fanout).prop_map(
            |(path, priority, ttl, force_refresh, o, fanout)| PrefetchRequest {
                path,
                priority,
                ttl,
                force_refresh,
                origin: Origin::from_code(o).unwrap(),
                fanout,
            },
        )
    }

    proptest! {
        #[test]
        fn request_round_trip(ctx in any::<u64>(), request in arb_request()) {
            let f = RequestFrame { ctx, request };
            prop_assert_eq!(RequestFrame::decode(&f.encode()).unwrap(), f);
        }

        #[test]
        fn truncated_request_is_rejected(ctx in any::<u64>(), request in arb_request(), cut in 1usize..8) {
            let bytes = RequestFrame { ctx, request }.encode();
            let n = bytes.len().saturating_sub(cut);
            prop_assert!(RequestFrame::decode(&bytes[..n]).is_err());
        }
    }

    #[test]
    fn response_round_trip() {
        let rec = MetadataRecord::directory(
            ResourcePath::parse("/a").unwrap(),
            9,
            vec![ChildEntry {
                name: "b".into(),
                kind: EntryKind::File,
                size_bytes: 3,
                mtime: 4,
            }],
        );
        for result in [
            FetchResult::Record(rec.clone()),
            FetchResult::Record(rec.deleted_marker()),
            FetchResult::Deleted,
            FetchResult::Failed("boom".into()),
        ] {
            let f = ResponseFrame { ctx: 77, result };
            assert_eq!(ResponseFrame::decode(&f.encode()).unwrap(), f);
        }
        let mut bytes = ResponseFrame {
            ctx: 1,
            result: FetchResult::Deleted,
        }
        .encode();
        bytes.push(0);
        assert!(ResponseFrame::decode(&bytes).is_err());
    }
}
