//! Protocol plug-ins turn logical metadata operations into pair chains.

use std::sync::Arc;

use crate::meta::{ChildEntry, EntryKind, MetadataRecord, ResourcePath};
use crate::remote::smp::{parse_attrs, reply_code};

use super::{Command, Pair, ParseOutcome, ParseStep, Parser, RequestTemplate, SharedSpace, StatEntry, TransferError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetaOp {
    Auth(String),
    /// Attributes plus the child listing of one path.
    List(ResourcePath),
    Stat(ResourcePath),
    /// Listing of a directory and of each child directory.
    ListTwoLevels(ResourcePath),
    /// Independent STATs streamed without waiting.
    StatMany(Vec<ResourcePath>),
    /// STAT of every prefix of a path, one at a time; each step requires
    /// the previous component to be a directory.
    Walk(ResourcePath),
}

pub trait Protocol: Send + Sync {
    fn id(&self) -> &'static str;
    fn template(&self, op: &MetaOp) -> RequestTemplate;
    /// Request to run first on every new connection, if any.
    fn handshake(&self) -> Option<RequestTemplate>;
}

pub fn protocol_by_id(id: &str) -> Result<Arc<dyn Protocol>, TransferError> {
    match id {
        "smp" => Ok(Arc::new(SmpProtocol::default())),
        other => Err(TransferError::UnknownProtocol(other.to_string())),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SmpProtocol {
    pub token: Option<String>,
}

impl SmpProtocol {
    pub fn with_token(token: impl Into<String>) -> Self {
        Self {
            token: Some(token.into()),
        }
    }
}

fn cmd(verb: &str, path: &ResourcePath) -> Command {
    Command::new(verb, [path.to_string()]).expect("paths never contain line breaks")
}

impl Protocol for SmpProtocol {
    fn id(&self) -> &'static str {
        "smp"
    }

    fn template(&self, op: &MetaOp) -> RequestTemplate {
        match op.clone() {
            MetaOp::Auth(token) => RequestTemplate::new(true, move || {
                vec![Pair::new(
                    Command::new("AUTH", [token.clone()]).expect("token is one line"),
                    AuthParser,
                )]
            }),
            MetaOp::List(p) => RequestTemplate::new(false, move || {
                vec![Pair::new(cmd("LIST", &p), ListParser::new(false))]
            }),
            MetaOp::ListTwoLevels(p) => RequestTemplate::new(false, move || {
                vec![Pair::new(cmd("MLSC", &p), ListParser::new(true))]
            }),
            MetaOp::Stat(p) => RequestTemplate::new(false, move || {
                vec![Pair::new(cmd("STAT", &p), StatParser { walk: None })]
            }),
            MetaOp::StatMany(ps) => RequestTemplate::new(false, move || {
                ps.iter()
                    .map(|p| Pair::new(cmd("STAT", p), StatParser { walk: None }))
                    .collect()
            }),
            MetaOp::Walk(p) => RequestTemplate::new(true, move || {
                vec![Pair::new(
                    cmd("STAT", &ResourcePath::root()),
                    StatParser {
                        walk: Some((p.clone(), 0)),
                    },
                )]
            }),
        }
    }

    fn handshake(&self) -> Option<RequestTemplate> {
        self.token.as_ref().map(|t| self.template(&MetaOp::Auth(t.clone())))
    }
}

fn failure(code: u16, text: &str) -> ParseStep {
    ParseStep::Done(if code == 550 {
        ParseOutcome::Deleted
    } else {
        ParseOutcome::ProtocolFailure {
            code,
            message: text.to_string(),
        }
    })
}

fn unexpected(line: &str) -> ParseStep {
    ParseStep::Done(ParseOutcome::ProtocolFailure {
        code: 0,
        message: format!("unexpected reply {line:?}"),
    })
}

#[derive(Debug)]
struct AuthParser;

impl Parser for AuthParser {
    fn feed(&mut self, line: &str, _: &mut SharedSpace) -> ParseStep {
        match reply_code(line) {
            Some((230, _)) => ParseStep::Done(ParseOutcome::Success(None)),
            Some((code, text)) => failure(code, text),
            None => unexpected(line),
        }
    }
}

#[derive(Debug)]
struct StatParser {
    /// Target path and the depth of the prefix this step checks.
    walk: Option<(ResourcePath, usize)>,
}

impl Parser for StatParser {
    fn feed(&mut self, line: &str, space: &mut SharedSpace) -> ParseStep {
        let (code, text) = match reply_code(line) {
            Some(c) => c,
            None => return unexpected(line),
        };
        if code != 213 {
            return failure(code, text);
        }
        let Some((kind, mtime, size_bytes, path)) = parse_attrs(text) else {
            return unexpected(line);
        };
        let Ok(path) = ResourcePath::parse(path) else {
            return unexpected(line);
        };
        space.stats.push(StatEntry {
            path,
            kind,
            mtime,
            size_bytes,
        });
        let Some((target, depth)) = &self.walk else {
            return ParseStep::Done(ParseOutcome::Success(None));
        };
        if *depth == target.depth() {
            return ParseStep::Done(ParseOutcome::Success(None));
        }
        if kind != EntryKind::Directory {
            return ParseStep::Done(ParseOutcome::Deleted);
        }
        let next = ResourcePath::from_segments(target.segments()[..depth + 1].iter().cloned())
            .expect("prefix of a valid path");
        ParseStep::Done(ParseOutcome::Success(Some(Pair::new(
            cmd("STAT", &next),
            StatParser {
                walk: Some((target.clone(), depth + 1)),
            },
        ))))
    }
}

/// Multi-line listing: `150` header, one entry per line, `250` terminator.
#[derive(Debug)]
struct ListParser {
    two_levels: bool,
    header: Option<(ResourcePath, EntryKind, u64, u64)>,
    children: Vec<ChildEntry>,
    grandchildren: Vec<(usize, ChildEntry)>,
}

impl ListParser {
    fn new(two_levels: bool) -> Self {
        Self {
            two_levels,
            header: None,
            children: Vec::new(),
            grandchildren: Vec::new(),
        }
    }

    fn finish(&mut self, space: &mut SharedSpace) -> ParseStep {
        let (path, kind, mtime, size) = self.header.take().expect("header seen");
        let children = std::mem::take(&mut self.children);
        if kind == EntryKind::File {
            space.records.push(MetadataRecord::file(path, size, mtime));
            return ParseStep::Done(ParseOutcome::Success(None));
        }
        let mut subdirs = Vec::new();
        if self.two_levels {
            let mut per_child: Vec<Vec<ChildEntry>> = vec![Vec::new(); children.len()];
            for (i, g) in self.grandchildren.drain(..) {
                per_child[i].push(g);
            }
            for (c, grand) in children.iter().zip(per_child) {
                if c.kind == EntryKind::Directory {
                    let p = path.join_all(std::slice::from_ref(&c.name));
                    subdirs.push(MetadataRecord::directory(p, c.mtime, grand));
                }
            }
        }
        space.records.push(MetadataRecord::directory(path, mtime, children));
        space.records.extend(subdirs);
        ParseStep::Done(ParseOutcome::Success(None))
    }
}

impl Parser for ListParser {
    fn feed(&mut self, line: &str, space: &mut SharedSpace) -> ParseStep {
        if let Some(entry) = line.strip_prefix(' ') {
            if self.header.is_none() {
                return unexpected(line);
            }
            let Some((kind, mtime, size_bytes, name)) = parse_attrs(entry) else {
                return unexpected(line);
            };
            let child = |name: &str| ChildEntry {
                name: name.to_string(),
                kind,
                size_bytes,
                mtime,
            };
            match name.split_once('/') {
                Some((parent, g)) if self.two_levels => {
                    match self.children.iter().rposition(|c| c.name == parent) {
                        Some(i) => self.grandchildren.push((i, child(g))),
                        None => return unexpected(line),
                    }
                }
                _ => self.children.push(child(name)),
            }
            return ParseStep::NeedMore;
        }
        match reply_code(line) {
            Some((150, text)) if self.header.is_none() => {
                let Some((kind, mtime, size, p)) = parse_attrs(text) else {
                    return unexpected(line);
                };
                let Ok(p) = ResourcePath::parse(p) else {
                    return unexpected(line);
                };
                self.header = Some((p, kind, mtime, size));
                ParseStep::NeedMore
            }
            Some((250, _)) if self.header.is_some() => self.finish(space),
            Some((code, text)) if code >= 400 => failure(code, text),
            _ => unexpected(line),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::remote::{DirectoryTree, Session, SmpService};
    use parking_lot::RwLock;

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    fn service() -> SmpService {
        let mut t = DirectoryTree::new();
        t.mkdir(&p("/a"), 0).unwrap();
        t.create(&p("/a/x"), 3, 0).unwrap();
        t.mkdir(&p("/a/y"), 0).unwrap();
        t.create(&p("/a/y/inner"), 1, 0).unwrap();
        SmpService::new(Arc::new(RwLock::new(t)))
    }

    /// Runs every pair of the chain in order against the service.
    fn run(op: MetaOp) -> (Vec<ParseOutcome>, SharedSpace) {
        let s = service();
        let mut sess = Session::default();
        let mut space = SharedSpace::default();
        let mut pairs: std::collections::VecDeque<Pair> =
            SmpProtocol::default().template(&op).build().into();
        let mut outcomes = Vec::new();
        while let Some(mut pair) = pairs.pop_front() {
            let reply = s.handle(&mut sess, pair.command.wire().trim_end());
            let mut done = None;
            for l in &reply {
                assert!(done.is_none(), "parser finished before its reply ended");
                if let ParseStep::Done(o) = pair.parser.feed(l, &mut space) {
                    done = Some(o);
                }
            }
            match done.expect("parser finished") {
                ParseOutcome::Success(next) => {
                    if let Some(n) = next {
                        pairs.push_back(n);
                    }
                    outcomes.push(ParseOutcome::Success(None));
                }
                o => outcomes.push(o),
            }
        }
        (outcomes, space)
    }

    #[test]
    fn list_builds_record() {
        let (_, space) = run(MetaOp::List(p("/a")));
        let r = &space.records[0];
        assert_eq!(r.path(), &p("/a"));
        let names: Vec<_> = r.children().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["x", "y"]);
    }

    #[test]
    fn list_of_file_is_file_record() {
        let (_, space) = run(MetaOp::List(p("/a/x")));
        assert_eq!(space.records[0].kind(), EntryKind::File);
        assert_eq!(space.records[0].size_bytes(), 3);
    }

    #[test]
    fn two_level_listing_yields_subdirectory_records() {
        let (_, space) = run(MetaOp::ListTwoLevels(p("/a")));
        assert_eq!(space.records[0].path(), &p("/a"));
        assert_eq!(space.records[1].path(), &p("/a/y"));
        assert_eq!(space.records[1].children()[0].name, "inner");
    }

    #[test]
    fn missing_path_is_deleted() {
        let (o, _) = run(MetaOp::List(p("/gone")));
        assert!(matches!(o[0], ParseOutcome::Deleted));
    }

    #[test]
    fn walk_chains_one_stat_per_component() {
        let (o, space) = run(MetaOp::Walk(p("/a/y/inner")));
        assert_eq!(o.len(), 4);
        assert_eq!(space.stats.len(), 4);
        assert_eq!(space.stats[3].path, p("/a/y/inner"));
        let (o, _) = run(MetaOp::Walk(p("/a/x/under")));
        assert!(matches!(o.last().unwrap(), ParseOutcome::Deleted));
    }

    #[test]
    fn unknown_protocol() {
        assert!(protocol_by_id("gopher").is_err());
        assert_eq!(protocol_by_id("smp").unwrap().id(), "smp");
    }
}
