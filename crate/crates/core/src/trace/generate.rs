//! Synthetic listing traces with controlled skew.
//!
//! Of `N` list operations, `U = u·N` target distinct paths and `h1·U` of
//! those are listed exactly once. The once-listed paths come from directory
//! scans (a directory, then its children in name order), from `A/*/B`
//! suffix bursts and from scattered singletons. The remaining paths are
//! split between hot directories, rescanned `hot_reuse` times at random
//! points, and warm directories, rescanned `warm_reuse` times at evenly
//! spaced points so that their reuse distance stays long. The hot share is
//! solved from the mean access count of the repeated paths, which has to
//! lie between the two reuse counts.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::meta::{digest_bytes, ResourcePath};

use super::{TraceError, TraceEvent, TraceOp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    /// List operations to emit.
    pub events: usize,
    pub unique_fraction: f64,
    pub once_fraction: f64,
    /// Depth range of generated directories; files sit one level deeper.
    pub min_depth: usize,
    pub max_depth: usize,
    /// Children per once-scan, drawn log-uniformly.
    pub scan_min: usize,
    pub scan_max: usize,
    /// Share of once-scans shaped as `A/<child>/B` bursts.
    pub suffix_burst_fraction: f64,
    pub hot_reuse: usize,
    pub warm_reuse: usize,
    /// Largest hot directory, counting the directory itself.
    pub hot_scan_max: usize,
    pub warm_scan_min: usize,
    pub warm_scan_max: usize,
    /// Share of once-listed paths that are isolated singletons.
    pub noise_fraction: f64,
    /// Per once-listed file, the chance that a write on it follows.
    pub write_fraction: f64,
    /// Gap between operations: `gap_ms` plus an exponential with mean
    /// `gap_jitter_ms`.
    pub gap_ms: f64,
    pub gap_jitter_ms: f64,
    pub start_ms: u64,
    /// Replace every path segment with a fixed-width hashed token.
    pub segment_width: Option<usize>,
    /// Share of first-day scans that recur on the second day.
    pub day2_overlap: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            events: 200_000,
            unique_fraction: 0.6,
            once_fraction: 0.92,
            min_depth: 5,
            max_depth: 10,
            scan_min: 20,
            scan_max: 3000,
            suffix_burst_fraction: 0.2,
            hot_reuse: 40,
            warm_reuse: 4,
            hot_scan_max: 5,
            warm_scan_min: 20,
            warm_scan_max: 200,
            noise_fraction: 0.03,
            write_fraction: 0.0,
            gap_ms: 50.0,
            gap_jitter_ms: 30.0,
            start_ms: 0,
            segment_width: None,
            day2_overlap: 0.7,
        }
    }
}

/// Counts the generator knows by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GeneratorTallies {
    pub reads: u64,
    pub writes: u64,
    pub unique_paths: u64,
    pub once_paths: u64,
    pub hot_paths: u64,
    pub warm_paths: u64,
    pub noise_paths: u64,
    pub once_scans: u64,
    pub suffix_bursts: u64,
    pub hot_scans: u64,
    pub warm_scans: u64,
    /// Reads beyond the nominal reuse counts, needed to land on `events`.
    pub extra_reads: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub events: Vec<TraceEvent>,
    pub tallies: GeneratorTallies,
}

#[derive(Debug, Clone, Copy)]
struct Plan {
    once: usize,
    hot: usize,
    warm: usize,
    extra: usize,
}

fn plan(spec: &GeneratorSpec) -> Result<Plan, TraceError> {
    let bad = |m: String| Err(TraceError::Infeasible(m));
    let n = spec.events;
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    if !(spec.unique_fraction > 0.0 && spec.unique_fraction <= 1.0) {
        return bad(format!("unique fraction {} outside (0, 1]", spec.unique_fraction));
    }
    for (name, x) in [
        ("once fraction", spec.once_fraction),
        ("suffix burst fraction", spec.suffix_burst_fraction),
        ("noise fraction", spec.noise_fraction),
        ("write fraction", spec.write_fraction),
        ("day-2 overlap", spec.day2_overlap),
    ] {
        if !unit(x) {
            return bad(format!("{name} {x} outside [0, 1]"));
        }
    }
    if spec.min_depth == 0 || spec.min_depth > spec.max_depth {
        return bad(format!("depth range {}..={}", spec.min_depth, spec.max_depth));
    }
    if spec.scan_min == 0 || spec.scan_min > spec.scan_max {
        return bad(format!("scan range {}..={}", spec.scan_min, spec.scan_max));
    }
    if spec.warm_scan_min == 0 || spec.warm_scan_min > spec.warm_scan_max || spec.hot_scan_max < 2 {
        return bad("repeated directory sizes".into());
    }
    if spec.warm_reuse < 2 || spec.hot_reuse <= spec.warm_reuse {
        return bad(format!(
            "reuse counts need 2 <= warm ({}) < hot ({})",
            spec.warm_reuse, spec.hot_reuse
        ));
    }
    if !(spec.gap_ms >= 0.0 && spec.gap_jitter_ms >= 0.0) {
        return bad("negative gap".into());
    }
    if let Some(w) = spec.segment_width {
        if w < 16 {
            return bad(format!("segment width {w} below 16"));
        }
    }
    if n == 0 {
        return Ok(Plan {
            once: 0,
            hot: 0,
            warm: 0,
            extra: 0,
        });
    }
    let unique = ((spec.unique_fraction * n as f64).round() as usize).clamp(1, n);
    let once = (spec.once_fraction * unique as f64).round() as usize;
    let multi = unique - once;
    let rest = n - once;
    if multi == 0 {
        if rest != 0 {
            return bad(format!("{rest} repeated reads but no repeated paths"));
        }
        return Ok(Plan {
            once,
            hot: 0,
            warm: 0,
            extra: 0,
        });
    }
    let (rh, rw) = (spec.hot_reuse, spec.warm_reuse);
    let mean = rest as f64 / multi as f64;
    if mean < rw as f64 || mean > rh as f64 {
        return bad(format!(
            "repeated paths would average {mean:.2} reads, outside [{rw}, {rh}]"
        ));
    }
    let hot = (rest - rw * multi) / (rh - rw);
    let warm = multi - hot;
    let extra = rest - rw * warm - rh * hot;
    Ok(Plan { once, hot, warm, extra })
}

const LEVEL_NAMES: [&str; 9] = ["proj", "grp", "usr", "data", "job", "run", "out", "day", "part"];

struct Namer {
    next: u64,
    width: Option<usize>,
}

impl Namer {
    fn shape(&self, s: String) -> String {
        let Some(w) = self.width else { return s };
        let h = digest_bytes(s.as_bytes());
        let mut out = String::with_capacity(w + 16);
        let mut k = h;
        while out.len() < w {
            out.push_str(&format!("{k:016x}"));
            k = digest_bytes(&k.to_le_bytes());
        }
        out.truncate(w);
        out
    }

    /// A fresh directory path; upper levels are drawn from small pools so
    /// directories share ancestors, the last segment is unique.
    fn dir(&mut self, rng: &mut ChaCha8Rng, depth: usize) -> ResourcePath {
        let mut segs = Vec::with_capacity(depth);
        for level in 0..depth - 1 {
            let pool = 3usize << level.min(6);
            let base = LEVEL_NAMES[level % LEVEL_NAMES.len()];
            segs.push(self.shape(format!("{base}{}", rng.gen_range(0..pool))));
        }
        segs.push(self.shape(format!("s{}", self.next)));
        self.next += 1;
        ResourcePath::from_segments(segs).expect("generated segments are valid")
    }

    fn children(&self, parent: &ResourcePath, n: usize, prefix: &str) -> Vec<ResourcePath> {
        let mut names: Vec<String> = (0..n).map(|i| self.shape(format!("{prefix}{i:05}"))).collect();
        names.sort();
        names
            .into_iter()
            .map(|c| parent.join_all(std::slice::from_ref(&c)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Once,
    Repeated,
}

#[derive(Debug, Clone)]
struct Unit {
    key: f64,
    kind: Kind,
    paths: Arc<[ResourcePath]>,
}

struct Builder<'a> {
    spec: &'a GeneratorSpec,
    rng: ChaCha8Rng,
    namer: Namer,
}

impl Builder<'_> {
    fn depth(&mut self) -> usize {
        self.rng.gen_range(self.spec.min_depth..=self.spec.max_depth)
    }

    fn log_uniform(&mut self, lo: usize, hi: usize) -> usize {
        let x = self.rng.gen_range((lo as f64).ln()..((hi + 1) as f64).ln());
        (x.exp() as usize).clamp(lo, hi)
    }

    fn singleton(&mut self) -> Arc<[ResourcePath]> {
        let d = self.depth();
        let dir = self.namer.dir(&mut self.rng, d);
        Arc::from(self.namer.children(&dir, 1, "f"))
    }

    /// A directory followed by `n` of its children.
    fn scan(&mut self, n: usize) -> Arc<[ResourcePath]> {
        let d = self.depth();
        let dir = self.namer.dir(&mut self.rng, d);
        let mut v = Vec::with_capacity(n + 1);
        v.push(dir.clone());
        v.extend(self.namer.children(&dir, n, "f"));
        Arc::from(v)
    }

    fn burst(&mut self, n: usize) -> Arc<[ResourcePath]> {
        let d = self.depth();
        let a = self.namer.dir(&mut self.rng, d);
        let tail = self.namer.shape("meta".to_string());
        let v: Vec<ResourcePath> = self
            .namer
            .children(&a, n, "t")
            .into_iter()
            .map(|c| c.join_all(std::slice::from_ref(&tail)))
            .collect();
        Arc::from(v)
    }

    fn units(&mut self, plan: &Plan, t: &mut GeneratorTallies) -> Vec<Unit> {
        let spec = self.spec;
        let mut units = Vec::new();
        let push = |units: &mut Vec<Unit>, key: f64, kind, paths: &Arc<[ResourcePath]>| {
            units.push(Unit {
                key,
                kind,
                paths: paths.clone(),
            });
        };

        let noise = ((spec.noise_fraction * plan.once as f64).round() as usize).min(plan.once);
        let mut budget = plan.once - noise;
        for _ in 0..noise {
            let p = self.singleton();
            let k = self.rng.gen();
            push(&mut units, k, Kind::Once, &p);
        }
        t.noise_paths = noise as u64;
        while budget > 0 {
            let n = self.log_uniform(spec.scan_min, spec.scan_max);
            let p = if budget == 1 {
                t.noise_paths += 1;
                self.singleton()
            } else if budget >= spec.scan_min && self.rng.gen_bool(spec.suffix_burst_fraction) {
                t.suffix_bursts += 1;
                self.burst(n.min(budget))
            } else {
                t.once_scans += 1;
                self.scan(n.min(budget - 1))
            };
            budget -= p.len();
            let k = self.rng.gen();
            push(&mut units, k, Kind::Once, &p);
        }

        let mut repeated: Vec<ResourcePath> = Vec::with_capacity(plan.hot + plan.warm);
        let mut left = plan.hot;
        while left > 0 {
            let s = self.rng.gen_range(2..=spec.hot_scan_max).min(left);
            let p = if s == 1 { self.singleton() } else { self.scan(s - 1) };
            left -= p.len();
            t.hot_scans += 1;
            repeated.extend(p.iter().cloned());
            for _ in 0..spec.hot_reuse {
                let k = self.rng.gen();
                push(&mut units, k, Kind::Repeated, &p);
            }
        }
        let mut left = plan.warm;
        let r = spec.warm_reuse as f64;
        while left > 0 {
            let s = self.rng.gen_range(spec.warm_scan_min..=spec.warm_scan_max).min(left);
            let p = if s == 1 { self.singleton() } else { self.scan(s - 1) };
            left -= p.len();
            t.warm_scans += 1;
            repeated.extend(p.iter().cloned());
            let offset = self.rng.gen_range(0.0..1.0 / r);
            for i in 0..spec.warm_reuse {
                let jitter = self.rng.gen_range(-0.02..0.02) / r;
                let k = (offset + i as f64 / r + jitter).rem_euclid(1.0);
                push(&mut units, k, Kind::Repeated, &p);
            }
        }
        for i in 0..plan.extra {
            let p: Arc<[ResourcePath]> = Arc::from(vec![repeated[i % repeated.len()].clone()]);
            let k = self.rng.gen();
            push(&mut units, k, Kind::Repeated, &p);
        }
        units.sort_by(|a, b| a.key.total_cmp(&b.key));
        units
    }

    fn emit(&mut self, units: &[Unit], start_ms: u64) -> (Vec<TraceEvent>, u64) {
        let spec = self.spec;
        let exp = (spec.gap_jitter_ms > 0.0).then(|| Exp::new(1.0 / spec.gap_jitter_ms).expect("positive rate"));
        let mut out = Vec::with_capacity(units.iter().map(|u| u.paths.len()).sum());
        let mut writes = 0;
        let mut t = start_ms as f64;
        for u in units {
            for (i, path) in u.paths.iter().enumerate() {
                t += spec.gap_ms + exp.map_or(0.0, |e| e.sample(&mut self.rng));
                let ts = t.round() as u64;
                out.push(TraceEvent::new(ts, TraceOp::ListStatus, path.clone()));
                let leaf = u.paths.len() == 1 || i > 0;
                if u.kind == Kind::Once && leaf && spec.write_fraction > 0.0 && self.rng.gen_bool(spec.write_fraction) {
                    out.push(self.write_on(path, ts));
                    writes += 1;
                }
            }
        }
        (out, writes)
    }

    fn write_on(&mut self, path: &ResourcePath, ts: u64) -> TraceEvent {
        let name = path.name().expect("generated paths are not the root").to_string();
        let parent = path.parent().expect("generated paths are not the root");
        let x: f64 = self.rng.gen();
        if x < 0.4 {
            TraceEvent::new(ts, TraceOp::Delete, path.clone())
        } else if x < 0.7 {
            let mut e = TraceEvent::new(ts, TraceOp::Rename, path.clone());
            e.path2 = Some(parent.join_all(&[format!("{name}-r")]));
            e
        } else {
            TraceEvent::new(ts, TraceOp::Create, parent.join_all(&[format!("{name}-n")]))
        }
    }
}

/// One trace, reproducible from `(spec, seed)`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<GeneratedTrace, TraceError> {
    let plan = plan(spec)?;
    let mut b = Builder {
        spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
        namer: Namer {
            next: 0,
            width: spec.segment_width,
        },
    };
    let mut t = GeneratorTallies {
        reads: spec.events as u64,
        unique_paths: (plan.once + plan.hot + plan.warm) as u64,
        once_paths: plan.once as u64,
        hot_paths: plan.hot as u64,
        warm_paths: plan.warm as u64,
        extra_reads: plan.extra as u64,
        ..GeneratorTallies::default()
    };
    let units = b.units(&plan, &mut t);
    let (events, writes) = b.emit(&units, spec.start_ms);
    t.writes = writes;
    Ok(GeneratedTrace { events, tallies: t })
}

const DAY_MS: u64 = 86_400_000;

/// Two consecutive days. About `day2_overlap` of the first day's scans
/// recur on the second, each in its original internal order; the rest of
/// the second day is new.
pub fn generate_pair(spec: &GeneratorSpec, seed: u64) -> Result<(GeneratedTrace, GeneratedTrace), TraceError> {
    let plan = plan(spec)?;
    let mut b = Builder {
        spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
        namer: Namer {
            next: 0,
            width: spec.segment_width,
        },
    };
    let mut t1 = GeneratorTallies {
        reads: spec.events as u64,
        unique_paths: (plan.once + plan.hot + plan.warm) as u64,
        once_paths: plan.once as u64,
        hot_paths: plan.hot as u64,
        warm_paths: plan.warm as u64,
        extra_reads: plan.extra as u64,
        ..GeneratorTallies::default()
    };
    let day1 = b.units(&plan, &mut t1);
    let (ev1, w1) = b.emit(&day1, spec.start_ms);
    t1.writes = w1;

    let mut scratch = GeneratorTallies::default();
    let fresh = b.units(&plan, &mut scratch);
    let mut day2: Vec<Unit> = Vec::with_capacity(day1.len());
    for u in &day1 {
        if b.rng.gen_bool(spec.day2_overlap) {
            let mut u = u.clone();
            u.key = (u.key + b.rng.gen_range(-0.005..0.005)).rem_euclid(1.0);
            day2.push(u);
        }
    }
    for u in fresh {
        if b.rng.gen_bool(1.0 - spec.day2_overlap) {
            day2.push(u);
        }
    }
    day2.shuffle(&mut b.rng);
    day2.sort_by(|a, b| a.key.total_cmp(&b.key));
    let (ev2, w2) = b.emit(&day2, spec.start_ms + DAY_MS);
    let t2 = tally(&ev2, w2);
    Ok((
        GeneratedTrace {
            events: ev1,
            tallies: t1,
        },
        GeneratedTrace {
            events: ev2,
            tallies: t2,
        },
    ))
}

fn tally(events: &[TraceEvent], writes: u64) -> GeneratorTallies {
    let mut counts: HashMap<&ResourcePath, u64> = HashMap::new();
    let mut reads = 0;
    for e in events.iter().filter(|e| e.is_list()) {
        reads += 1;
        *counts.entry(&e.path).or_default() += 1;
    }
    GeneratorTallies {
        reads,
        writes,
        unique_paths: counts.len() as u64,
        once_paths: counts.values().filter(|&&c| c == 1).count() as u64,
        ..GeneratorTallies::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::compute_stats;

    fn small(n: usize) -> GeneratorSpec {
        GeneratorSpec {
            events: n,
            ..GeneratorSpec::default()
        }
    }

    #[test]
    fn zero_events_is_empty() {
        let g = generate(&small(0), 1).unwrap();
        assert!(g.events.is_empty());
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        for spec in [
            GeneratorSpec {
                unique_fraction: 1.5,
                ..small(100)
            },
            GeneratorSpec {
                unique_fraction: 0.05,
                ..small(1000)
            },
            GeneratorSpec {
                unique_fraction: 0.99,
                once_fraction: 0.5,
                ..small(1000)
            },
            GeneratorSpec {
                min_depth: 5,
                max_depth: 3,
                ..small(10)
            },
        ] {
            assert!(matches!(generate(&spec, 1), Err(TraceError::Infeasible(_))), "{spec:?}");
        }
    }

    #[test]
    fn tallies_match_measured_stats() {
        let g = generate(&small(20_000), 7).unwrap();
        let s = compute_stats(&g.events);
        assert_eq!(s.list_ops, g.tallies.reads);
        assert_eq!(s.unique_paths, g.tallies.unique_paths);
        assert_eq!(s.once_paths, g.tallies.once_paths);
        assert!((s.unique_fraction - 0.6).abs() < 0.001);
        assert!((s.once_fraction - 0.92).abs() < 0.001);
    }

    #[test]
    fn same_seed_same_trace() {
        let spec = GeneratorSpec {
            write_fraction: 0.01,
            ..small(5000)
        };
        assert_eq!(generate(&spec, 3).unwrap(), generate(&spec, 3).unwrap());
        assert_ne!(generate(&spec, 3).unwrap().events, generate(&spec, 4).unwrap().events);
    }

    #[test]
    fn timestamps_do_not_decrease_and_gaps_exceed_floor() {
        let g = generate(&small(3000), 5).unwrap();
        for w in g.events.windows(2) {
            assert!(w[1].timestamp_ms >= w[0].timestamp_ms + 49);
        }
    }

    #[test]
    fn depth_range_is_respected() {
        let g = generate(&small(5000), 9).unwrap();
        for e in &g.events {
            assert!((5..=12).contains(&e.path.depth()), "{}", e.path);
        }
    }

    #[test]
    fn fixed_width_segments() {
        let spec = GeneratorSpec {
            segment_width: Some(27),
            ..small(2000)
        };
        let g = generate(&spec, 1).unwrap();
        assert!(g.events.iter().all(|e| e.path.segments().iter().all(|s| s.len() == 27)));
        let s = compute_stats(&g.events);
        assert_eq!(s.unique_paths, g.tallies.unique_paths);
    }

    #[test]
    fn second_day_repeats_scans() {
        let (d1, d2) = generate_pair(&small(20_000), 11).unwrap();
        let first: std::collections::HashSet<&ResourcePath> = d1.events.iter().map(|e| &e.path).collect();
        let shared = d2.events.iter().filter(|e| first.contains(&e.path)).count();
        let share = shared as f64 / d2.events.len() as f64;
        assert!((0.6..0.8).contains(&share), "{share}");
        assert!(d2.events[0].timestamp_ms >= DAY_MS);
    }
}
