use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetaError;

/// Canonical "/"-joined resource path. The root has zero segments.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ResourcePath {
    segments: Vec<String>,
}

impl ResourcePath {
    pub fn root() -> Self {
        Self::default()
    }

    /// Parses a path string. Empty segments produced by repeated or trailing
    /// slashes are dropped; `.` and `..` are rejected.
    pub fn parse(s: &str) -> Result<Self, MetaError> {
        if !s.starts_with('/') {
            return Err(MetaError::InvalidPath(s.to_string()));
        }
        let mut segments = Vec::new();
        for seg in s.split('/') {
            if seg.is_empty() {
                continue;
            }
            Self::check_segment(seg).map_err(|_| MetaError::InvalidPath(s.to_string()))?;
            segments.push(seg.to_string());
        }
        Ok(Self { segments })
    }

    pub fn from_segments<I, S>(segments: I) -> Result<Self, MetaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        for seg in &segments {
            Self::check_segment(seg)?;
        }
        Ok(Self { segments })
    }

    fn check_segment(seg: &str) -> Result<(), MetaError> {
        if seg.is_empty()
            || seg == "."
            || seg == ".."
            || seg.contains('/')
            || seg.contains(['\n', '\r', '\t'])
        {
            return Err(MetaError::InvalidSegment(seg.to_string()));
        }
        Ok(())
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    pub fn is_root(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn name(&self) -> Option<&str> {
        self.segments.last().map(String::as_str)
    }

    pub fn parent(&self) -> Option<ResourcePath> {
        if self.segments.is_empty() {
            None
        } else {
            Some(Self {
                segments: self.segments[..self.segments.len() - 1].to_vec(),
            })
        }
    }

    pub fn join(&self, segment: &str) -> Result<ResourcePath, MetaError> {
        Self::check_segment(segment)?;
        let mut segments = self.segments.clone();
        segments.push(segment.to_string());
        Ok(Self { segments })
    }

    /// Appends already-validated segments.
    pub fn join_all(&self, tail: &[String]) -> ResourcePath {
        let mut segments = self.segments.clone();
        segments.extend(tail.iter().cloned());
        Self { segments }
    }

    /// True when `self` equals `prefix` or lies underneath it.
    pub fn starts_with(&self, prefix: &ResourcePath) -> bool {
        self.segments.len() >= prefix.segments.len()
            && self.segments[..prefix.segments.len()] == prefix.segments[..]
    }

    /// Replaces the leading `from` prefix with `to`. Returns `None` when
    /// `self` is not under `from`.
    pub fn rebase(&self, from: &ResourcePath, to: &ResourcePath) -> Option<ResourcePath> {
        if !self.starts_with(from) {
            return None;
        }
        Some(to.join_all(&self.segments[from.segments.len()..]))
    }

    /// All proper ancestors from the root down, excluding `self`.
    pub fn ancestors(&self) -> impl Iterator<Item = ResourcePath> + '_ {
        (0..self.segments.len()).map(move |n| Self {
            segments: self.segments[..n].to_vec(),
        })
    }

    /// 64-bit key used by caches and block stores.
    pub fn key(&self) -> u64 {
        super::digest_bytes(self.to_string().as_bytes())
    }
}

impl fmt::Display for ResourcePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.segments.is_empty() {
            return f.write_str("/");
        }
        for seg in &self.segments {
            f.write_str("/")?;
            f.write_str(seg)?;
        }
        Ok(())
    }
}

impl fmt::Debug for ResourcePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ResourcePath({self})")
    }
}

impl FromStr for ResourcePath {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for ResourcePath {
    type Error = MetaError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<ResourcePath> for String {
    fn from(p: ResourcePath) -> String {
        p.to_string()
    }
}
