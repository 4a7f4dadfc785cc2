use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Write};
use std::path::Path;

use chrono::NaiveDateTime;

use crate::meta::ResourcePath;
use crate::predict::Attributes;

use super::{TraceError, TraceEvent, TraceOp};

/// Lines seen before the malformed ratio is checked mid-stream.
const EARLY_CHECK_LINES: u64 = 1000;
const SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadCounts {
    /// Non-blank, non-comment lines.
    pub lines: u64,
    pub events: u64,
    pub malformed: u64,
    /// Events whose timestamp went backwards and was clamped.
    pub clamped: u64,
}

/// Streaming reader over either line format.
pub struct TraceReader<R> {
    lines: Lines<R>,
    counts: ReadCounts,
    last_ts: u64,
    samples: Vec<String>,
    failed: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            counts: ReadCounts::default(),
            last_ts: 0,
            samples: Vec::new(),
            failed: false,
        }
    }

    pub fn counts(&self) -> ReadCounts {
        self.counts
    }

    fn too_many(&self) -> bool {
        self.counts.malformed > 0 && self.counts.malformed * 2 > self.counts.lines
    }

    fn abort(&mut self) -> Option<Result<TraceEvent, TraceError>> {
        self.failed = true;
        Some(Err(TraceError::TooManyMalformed {
            malformed: self.counts.malformed,
            lines: self.counts.lines,
            samples: std::mem::take(&mut self.samples),
        }))
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next() {
                None if self.too_many() => return self.abort(),
                None => return None,
                Some(Err(e)) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
                Some(Ok(l)) => l,
            };
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.counts.lines += 1;
            let parsed = if t.contains("cmd=") { parse_audit(t) } else { parse_tsv(t) };
            match parsed {
                Ok(mut ev) => {
                    if ev.timestamp_ms < self.last_ts {
                        ev.timestamp_ms = self.last_ts;
                        self.counts.clamped += 1;
                    }
                    self.last_ts = ev.timestamp_ms;
                    self.counts.events += 1;
                    return Some(Ok(ev));
                }
                Err(why) => {
                    self.counts.malformed += 1;
                    log::debug!("line {}: {why}", self.counts.lines);
                    if self.samples.len() < SAMPLES {
                        self.samples.push(format!("{why}: {t}"));
                    }
                    if self.counts.lines >= EARLY_CHECK_LINES && self.too_many() {
                        return self.abort();
                    }
                }
            }
        }
    }
}

pub fn open_trace(path: &Path) -> Result<TraceReader<BufReader<File>>, TraceError> {
    Ok(TraceReader::new(BufReader::new(File::open(path)?)))
}

/// Reads a whole trace file into memory.
pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    open_trace(path)?.collect()
}

fn parse_path(s: &str) -> Result<ResourcePath, String> {
    if s.is_empty() || s == "null" {
        return Err("missing path".into());
    }
    ResourcePath::parse(s).map_err(|e| e.to_string())
}

fn parse_attrs(s: &str) -> Result<Attributes, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("attributes need 3 fields, got {}", parts.len()));
    }
    let opt = |x: &str| (!x.is_empty()).then(|| x.to_string());
    Ok(Attributes {
        user: opt(parts[0]),
        process: opt(parts[1]),
        host: opt(parts[2]),
    })
}

fn parse_tsv(line: &str) -> Result<TraceEvent, String> {
    let f: Vec<&str> = line.split('\t').collect();
    if !(3..=5).contains(&f.len()) {
        return Err(format!("expected 3 to 5 fields, got {}", f.len()));
    }
    let ts: u64 = f[0].trim().parse().map_err(|_| format!("bad timestamp `{}`", f[0]))?;
    let op: TraceOp = f[1].parse()?;
    let mut ev = TraceEvent::new(ts, op, parse_path(f[2])?);
    for extra in &f[3..] {
        if extra.starts_with('/') && ev.path2.is_none() && ev.attributes.is_empty() {
            ev.path2 = Some(parse_path(extra)?);
        } else if ev.attributes.is_empty() {
            ev.attributes = parse_attrs(extra)?;
        } else {
            return Err("unexpected trailing field".into());
        }
    }
    check_paths(&ev)?;
    Ok(ev)
}

fn check_paths(ev: &TraceEvent) -> Result<(), String> {
    if ev.op == TraceOp::Rename && ev.path2.is_none() {
        return Err("rename without destination".into());
    }
    if ev.path.is_root() && ev.op.is_write() {
        return Err("write to the root".into());
    }
    Ok(())
}

fn audit_timestamp(line: &str) -> Option<u64> {
    let head = line.get(..23)?;
    let t = NaiveDateTime::parse_from_str(head, "%Y-%m-%d %H:%M:%S,%3f").ok()?;
    u64::try_from(t.and_utc().timestamp_millis()).ok()
}

fn parse_audit(line: &str) -> Result<TraceEvent, String> {
    let mut cmd = None;
    let mut src = None;
    let mut dst = None;
    let mut attrs = Attributes::default();
    for tok in line.split(['\t', ' ']) {
        let Some((k, v)) = tok.split_once('=') else { continue };
        match k {
            "cmd" => cmd = Some(v),
            "src" => src = Some(v),
            "dst" => dst = Some(v),
            "ugi" => {
                let user = v.split([',', '(']).next().unwrap_or("");
                attrs.user = (!user.is_empty()).then(|| user.to_string());
            }
            "ip" => {
                let host = v.trim_start_matches('/');
                attrs.host = (!host.is_empty() && host != "null").then(|| host.to_string());
            }
            "proto" | "callerContext" => {
                attrs.process = (!v.is_empty() && v != "null").then(|| v.to_string());
            }
            _ => {}
        }
    }
    let op: TraceOp = cmd.ok_or("no cmd= field")?.parse()?;
    let ts = audit_timestamp(line).ok_or("no leading timestamp")?;
    let mut ev = TraceEvent::new(ts, op, parse_path(src.ok_or("no src= field")?)?);
    ev.path2 = match dst {
        Some(d) if d != "null" => Some(parse_path(d)?),
        _ => None,
    };
    ev.attributes = attrs;
    check_paths(&ev)?;
    Ok(ev)
}

/// One native-format line, without the newline.
pub fn format_tsv(ev: &TraceEvent) -> String {
    let mut s = format!("{}\t{}\t{}", ev.timestamp_ms, ev.op, ev.path);
    if let Some(p) = &ev.path2 {
        s.push('\t');
        s.push_str(&p.to_string());
    }
    if !ev.attributes.is_empty() {
        let a = &ev.attributes;
        let f = |x: &Option<String>| x.clone().unwrap_or_default();
        s.push_str(&format!("\t{},{},{}", f(&a.user), f(&a.process), f(&a.host)));
    }
    s
}

pub fn write_tsv<'a>(mut w: impl Write, events: impl IntoIterator<Item = &'a TraceEvent>) -> std::io::Result<()> {
    for ev in events {
        writeln!(w, "{}", format_tsv(ev))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<Vec<TraceEvent>, TraceError> {
        TraceReader::new(s.as_bytes()).collect()
    }

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    #[test]
    fn audit_list_and_rename() {
        let text = "\
2010-03-01 00:00:01,250 INFO FSNamesystem.audit: ugi=alice,staff ip=/10.1.2.3 cmd=listStatus src=/u/a dst=null perm=null
2010-03-01 00:00:02,000 INFO FSNamesystem.audit: ugi=bob ip=/10.1.2.4 cmd=rename src=/a dst=/b perm=bob:rw
";
        let ev = read(text).unwrap();
        assert_eq!(ev[0].op, TraceOp::ListStatus);
        assert_eq!(ev[0].path, p("/u/a"));
        assert_eq!(ev[0].attributes.user.as_deref(), Some("alice"));
        assert_eq!(ev[0].attributes.host.as_deref(), Some("10.1.2.3"));
        assert_eq!(ev[1].timestamp_ms - ev[0].timestamp_ms, 750);
        assert_eq!((ev[1].op.clone(), ev[1].path2.clone()), (TraceOp::Rename, Some(p("/b"))));
    }

    #[test]
    fn tsv_forms() {
        let ev = read("5\tlistStatus\t/a\n6\trename\t/a\t/b\tu,p,h\n7\topen\t/c\tu,,\n").unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[1].path2, Some(p("/b")));
        assert_eq!(ev[1].attributes.process.as_deref(), Some("p"));
        assert_eq!(ev[2].attributes.host, None);
        for e in &ev {
            assert_eq!(read(&format_tsv(e)).unwrap(), [e.clone()]);
        }
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert!(read("").unwrap().is_empty());
        assert!(read("\n# comment\n").unwrap().is_empty());
    }

    #[test]
    fn malformed_minority_is_skipped() {
        let mut r = TraceReader::new("1\tls\t/a\ngarbage\n2\tls\t/b\n".as_bytes());
        let ev: Vec<_> = r.by_ref().collect::<Result<_, _>>().unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(r.counts().malformed, 1);
    }

    #[test]
    fn malformed_majority_aborts() {
        let err = read("1\tls\t/a\nx\ny\n").unwrap_err();
        assert!(matches!(err, TraceError::TooManyMalformed { malformed: 2, lines: 3, .. }));
    }

    #[test]
    fn backwards_timestamp_is_clamped() {
        let mut r = TraceReader::new("9\tls\t/a\n3\tls\t/b\n".as_bytes());
        let ev: Vec<_> = r.by_ref().map(Result::unwrap).collect();
        assert_eq!(ev[1].timestamp_ms, 9);
        assert_eq!(r.counts().clamped, 1);
    }

    #[test]
    fn rename_needs_destination() {
        assert!(parse_tsv("1\trename\t/a").is_err());
    }
}
