//! SMP, a small line-oriented metadata protocol.
//!
//! Commands are single lines `VERB [arg]`. Replies start with a three digit
//! code: `1xx` opens a multi-line reply, `2xx` succeeds or terminates one,
//! `4xx` is transient, `5xx` permanent. Listing entries between `150` and
//! `250` begin with a space so they can never be mistaken for a code.
//!
//! ```text
//! LIST /a          150 d<TAB>12<TAB>0<TAB>/a
//!                   f<TAB>10<TAB>3<TAB>x
//!                   d<TAB>11<TAB>0<TAB>y
//!                  250 2
//! STAT /a/x        213 f<TAB>10<TAB>3<TAB>/a/x
//! STAT /nope       550 No such file or directory
//! ```
//!
//! `MLSC` is `LIST` extended one level down: grandchildren are reported as
//! `child/grandchild`. `LIST` on a file answers with a header and no
//! entries.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::meta::{EntryKind, ResourcePath};

use super::DirectoryTree;

pub const NO_SUCH_PATH: &str = "550 No such file or directory";
pub const TIMEOUT_REPLY: &str = "421 TIMEOUT";

pub fn format_attrs(kind: EntryKind, mtime: u64, size: u64, name: &str) -> String {
    format!("{}\t{}\t{}\t{}", kind.letter(), mtime, size, name)
}

/// Parses `kind<TAB>mtime<TAB>size<TAB>name`.
pub fn parse_attrs(s: &str) -> Option<(EntryKind, u64, u64, &str)> {
    let mut it = s.splitn(4, '\t');
    let kind = EntryKind::from_letter(it.next()?)?;
    let mtime = it.next()?.parse().ok()?;
    let size = it.next()?.parse().ok()?;
    Some((kind, mtime, size, it.next()?))
}

/// Splits a reply line into its code and text. Entry lines yield `None`.
pub fn reply_code(line: &str) -> Option<(u16, &str)> {
    let b = line.as_bytes();
    if b.len() < 3 || !b[..3].iter().all(u8::is_ascii_digit) {
        return None;
    }
    if b.len() > 3 && b[3] != b' ' {
        return None;
    }
    let code = line[..3].parse().ok()?;
    Some((code, line.get(4..).unwrap_or("")))
}

/// Per-connection protocol state.
#[derive(Debug, Default, Clone)]
pub struct Session {
    pub authenticated: bool,
    pub closing: bool,
}

/// Command interpreter over a shared tree. Used by the TCP server and the
/// in-process transport alike.
#[derive(Debug)]
pub struct SmpService {
    tree: Arc<RwLock<DirectoryTree>>,
    token: Option<String>,
    transient_faults: Mutex<HashMap<ResourcePath, u32>>,
}

impl SmpService {
    pub fn new(tree: Arc<RwLock<DirectoryTree>>) -> Self {
        Self {
            tree,
            token: None,
            transient_faults: Mutex::new(HashMap::new()),
        }
    }

    /// Requires `AUTH <token>` before any metadata command.
    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn tree(&self) -> &Arc<RwLock<DirectoryTree>> {
        &self.tree
    }

    /// The next `count` metadata commands on `path` answer `450`.
    pub fn inject_transient(&self, path: ResourcePath, count: u32) {
        self.transient_faults.lock().insert(path, count);
    }

    pub fn handle(&self, session: &mut Session, line: &str) -> Vec<String> {
        let line = line.trim_end_matches(['\r', '\n']);
        let (verb, arg) = match line.split_once(' ') {
            Some((v, a)) => (v, Some(a)),
            None => (line, None),
        };
        match verb {
            "AUTH" => {
                let ok = match (&self.token, arg) {
                    (None, _) => true,
                    (Some(t), Some(a)) => t == a,
                    (Some(_), None) => false,
                };
                session.authenticated = ok;
                vec![if ok { "230 Logged in" } else { "530 Not logged in" }.into()]
            }
            "NOOP" => vec!["200 OK".into()],
            "QUIT" => {
                session.closing = true;
                vec!["221 Bye".into()]
            }
            "LIST" | "STAT" | "MLSC" => {
                if self.token.is_some() && !session.authenticated {
                    return vec!["530 Not logged in".into()];
                }
                let Some(path) = arg.and_then(|a| ResourcePath::parse(a).ok()) else {
                    return vec!["500 Syntax error in path".into()];
                };
                if let Some(n) = self.transient_faults.lock().get_mut(&path) {
                    if *n > 0 {
                        *n -= 1;
                        return vec!["450 Requested action not taken".into()];
                    }
                }
                let tree = self.tree.read();
                match verb {
                    "STAT" => stat_reply(&tree, &path),
                    "LIST" => list_reply(&tree, &path, false),
                    _ => list_reply(&tree, &path, true),
                }
            }
            _ => vec!["500 Syntax error, command unrecognized".into()],
        }
    }
}

fn stat_reply(tree: &DirectoryTree, path: &ResourcePath) -> Vec<String> {
    match tree.stat(path) {
        Some((kind, mtime, size)) => {
            vec![format!("213 {}", format_attrs(kind, mtime, size, &path.to_string()))]
        }
        None => vec![NO_SUCH_PATH.into()],
    }
}

fn list_reply(tree: &DirectoryTree, path: &ResourcePath, recursive: bool) -> Vec<String> {
    let Some(rec) = tree.list(path) else {
        return vec![NO_SUCH_PATH.into()];
    };
    let mut out = Vec::with_capacity(rec.children().len() + 2);
    out.push(format!(
        "150 {}",
        format_attrs(rec.kind(), rec.mtime(), rec.size_bytes(), &path.to_string())
    ));
    let mut count = 0usize;
    for c in rec.children() {
        out.push(format!(" {}", format_attrs(c.kind, c.mtime, c.size_bytes, &c.name)));
        count += 1;
        if recursive && c.kind == EntryKind::Directory {
            let child = path.join_all(std::slice::from_ref(&c.name));
            if let Some(sub) = tree.list(&child) {
                for g in sub.children() {
                    let name = format!("{}/{}", c.name, g.name);
                    out.push(format!(" {}", format_attrs(g.kind, g.mtime, g.size_bytes, &name)));
                    count += 1;
                }
            }
        }
    }
    out.push(format!("250 {count}"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> ResourcePath {
        ResourcePath::parse(s).unwrap()
    }

    fn service() -> SmpService {
        let mut t = DirectoryTree::new();
        t.mkdir(&p("/a"), 0).unwrap();
        t.create(&p("/a/x"), 3, 0).unwrap();
        t.mkdir(&p("/a/y"), 0).unwrap();
        t.create(&p("/a/y/inner"), 1, 0).unwrap();
        t.create(&p("/a/z"), 4, 0).unwrap();
        SmpService::new(Arc::new(RwLock::new(t)))
    }

    #[test]
    fn list_streams_children_between_150_and_250() {
        let s = service();
        let r = s.handle(&mut Session::default(), "LIST /a");
        assert_eq!(r.len(), 5);
        assert!(r[0].starts_with("150 d\t"));
        assert!(r[1].starts_with(" f\t") && r[1].ends_with("\tx"));
        assert_eq!(r[4], "250 3");
        for l in &r[1..4] {
            assert_eq!(reply_code(l), None);
        }
    }

    #[test]
    fn mlsc_reaches_one_level_down() {
        let s = service();
        let r = s.handle(&mut Session::default(), "MLSC /a");
        assert!(r.iter().any(|l| l.ends_with("\ty/inner")));
        assert_eq!(r.last().unwrap(), "250 4");
    }

    #[test]
    fn missing_and_malformed() {
        let s = service();
        let mut sess = Session::default();
        assert_eq!(s.handle(&mut sess, "STAT /missing"), vec![NO_SUCH_PATH]);
        assert_eq!(reply_code(&s.handle(&mut sess, "FOO")[0]).unwrap().0, 500);
        assert_eq!(reply_code(&s.handle(&mut sess, "LIST a/../b")[0]).unwrap().0, 500);
        // the session survives errors
        assert!(s.handle(&mut sess, "STAT /a/x")[0].starts_with("213 f\t"));
    }

    #[test]
    fn auth_gate() {
        let s = service().with_token("secret");
        let mut sess = Session::default();
        assert_eq!(reply_code(&s.handle(&mut sess, "LIST /a")[0]).unwrap().0, 530);
        assert_eq!(reply_code(&s.handle(&mut sess, "AUTH nope")[0]).unwrap().0, 530);
        assert_eq!(reply_code(&s.handle(&mut sess, "AUTH secret")[0]).unwrap().0, 230);
        assert_eq!(reply_code(&s.handle(&mut sess, "LIST /a")[0]).unwrap().0, 150);
    }

    #[test]
    fn injected_faults_are_consumed() {
        let s = service();
        s.inject_transient(p("/a"), 2);
        let mut sess = Session::default();
        assert_eq!(reply_code(&s.handle(&mut sess, "LIST /a")[0]).unwrap().0, 450);
        assert_eq!(reply_code(&s.handle(&mut sess, "LIST /a")[0]).unwrap().0, 450);
        assert_eq!(reply_code(&s.handle(&mut sess, "LIST /a")[0]).unwrap().0, 150);
    }

    #[test]
    fn attrs_round_trip() {
        let l = format_attrs(EntryKind::File, 7, 9, "a b");
        assert_eq!(parse_attrs(&l), Some((EntryKind::File, 7, 9, "a b")));
        assert_eq!(reply_code("250"), Some((250, "")));
        assert_eq!(reply_code("2500"), None);
    }
}
