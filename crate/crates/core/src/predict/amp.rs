use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::cache::MetaCache;
use crate::meta::ResourcePath;

use super::{Candidate, PredictError, PredictOn, Predictor, PredictorInput};

type Context = (ResourcePath, ResourcePath);

/// Trigram counts over consecutive paths. Both levels keep first-seen
/// order, which breaks count ties and survives a save/load round trip.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NGramModel {
    table: IndexMap<Context, IndexMap<ResourcePath, u64>>,
}

impl NGramModel {
    pub fn train<'a>(paths: impl IntoIterator<Item = &'a ResourcePath>) -> Self {
        let mut m = NGramModel::default();
        let mut prev: Option<(&ResourcePath, &ResourcePath)> = None;
        let mut last: Option<&ResourcePath> = None;
        for p in paths {
            if let Some((a, b)) = prev {
                m.add(a.clone(), b.clone(), p.clone(), 1);
            }
            if let Some(l) = last {
                prev = Some((l, p));
            }
            last = Some(p);
        }
        m
    }

    fn add(&mut self, a: ResourcePath, b: ResourcePath, c: ResourcePath, n: u64) {
        *self.table.entry((a, b)).or_default().entry(c).or_insert(0) += n;
    }

    pub fn contexts(&self) -> usize {
        self.table.len()
    }

    pub fn count(&self, a: &ResourcePath, b: &ResourcePath, c: &ResourcePath) -> u64 {
        self.table
            .get(&(a.clone(), b.clone()))
            .and_then(|m| m.get(c).copied())
            .unwrap_or(0)
    }

    /// Up to `m` most frequent followers of the context `(a, b)`.
    pub fn predict(&self, a: &ResourcePath, b: &ResourcePath, m: usize) -> Vec<ResourcePath> {
        let Some(next) = self.table.get(&(a.clone(), b.clone())) else {
            return Vec::new();
        };
        let mut v: Vec<(&ResourcePath, u64)> = next.iter().map(|(p, &n)| (p, n)).collect();
        v.sort_by(|x, y| y.1.cmp(&x.1));
        v.into_iter().take(m).map(|(p, _)| p.clone()).collect()
    }

    /// Writes one `count<TAB>p1<TAB>p2<TAB>p3` line per trigram.
    pub fn save(&self, path: &Path) -> Result<(), PredictError> {
        let io = |source| PredictError::ModelIo {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
        for ((a, b), next) in &self.table {
            for (c, n) in next {
                writeln!(w, "{n}\t{a}\t{b}\t{c}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, PredictError> {
        let io = |source| PredictError::ModelIo {
            path: path.to_path_buf(),
            source,
        };
        let r = BufReader::new(fs::File::open(path).map_err(io)?);
        let mut m = NGramModel::default();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || PredictError::ModelFormat {
                line: i + 1,
                text: line.clone(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let n: u64 = f[0].parse().map_err(|_| bad())?;
            let parse = |s: &str| ResourcePath::parse(s).map_err(|_| bad());
            if n == 0 {
                return Err(bad());
            }
            m.add(parse(f[1])?, parse(f[2])?, parse(f[3])?, n);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmpConfig {
    pub m: usize,
    pub model_path: Option<PathBuf>,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self { m: 6, model_path: None }
    }
}

/// Trigram predictor using a model trained on an earlier trace. Without a
/// model it predicts nothing.
#[derive(Debug)]
pub struct Amp {
    model: Option<Arc<NGramModel>>,
    m: usize,
    on: PredictOn,
    last: Option<ResourcePath>,
}

impl Amp {
    pub fn new(cfg: AmpConfig, on: PredictOn, model: Option<Arc<NGramModel>>) -> Self {
        Self {
            model,
            m: cfg.m,
            on,
            last: None,
        }
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }
}

impl Predictor for Amp {
    fn name(&self) -> &'static str {
        "amp"
    }

    fn observe(&mut self, input: &PredictorInput, hit: bool, _cache: &MetaCache) -> Vec<Candidate> {
        let prev = self.last.replace(input.path.clone());
        let (Some(model), Some(prev)) = (&self.model, prev) else {
            return Vec::new();
        };
        if !self.on.fires(hit) {
            return Vec::new();
        }
        model
            .predict(&prev, &input.path, self.m)
            .into_iter()
            .map(|p| Candidate::plain(p, 0))
            .collect()
    }
}
