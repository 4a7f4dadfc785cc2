//! C ABI over the metadata cache, trace statistics and experiment runner.
//!
//! Every fallible call returns an [`MfStatus`]. On failure the calling
//! thread's message is available from [`mf_last_error`] until its next
//! failing call. Handles are opaque and owned by the caller, who releases
//! them with the matching `*_free` function. Strings returned through out
//! parameters are released with [`mf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use metafetch_core::cache::MetaCache;
use metafetch_core::config::ExperimentConfig;
use metafetch_core::meta::{EntryKind, MetadataRecord, ResourcePath};
use metafetch_core::report::{run_experiment, ExperimentReport};
use metafetch_core::trace::{compute_stats, read_trace};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidPath = 3,
    Config = 4,
    Trace = 5,
    Experiment = 6,
    Panic = 7,
}

/// Opaque experiment configuration.
pub struct MfConfig(ExperimentConfig);

/// Opaque result of one experiment run.
pub struct MfReport(ExperimentReport);

/// Opaque thread-safe LRU metadata cache.
pub struct MfCache(MetaCache);

/// Summary of a trace file.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MfTraceStats {
    pub events: u64,
    pub list_ops: u64,
    pub unique_paths: u64,
    pub once_paths: u64,
    pub unique_fraction: f64,
    pub once_fraction: f64,
}

/// One cached entry as seen by [`mf_cache_lookup`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MfEntry {
    pub is_directory: bool,
    pub is_live: bool,
    pub size_bytes: u64,
    pub mtime: u64,
    pub children: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: MfStatus, msg: impl Into<String>) -> MfStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`MfStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), (MfStatus, String)>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err((s, m))) => fail(s, m),
        Err(_) => fail(MfStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, (MfStatus, String)> {
    if s.is_null() {
        return Err((MfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (MfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn path_arg(s: *const c_char) -> Result<ResourcePath, (MfStatus, String)> {
    let s = text(s, "path")?;
    ResourcePath::parse(s).map_err(|e| (MfStatus::InvalidPath, e.to_string()))
}

fn out_ptr<T>(out: *mut T) -> Result<(), (MfStatus, String)> {
    if out.is_null() {
        Err((MfStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

unsafe fn handle<'a, T>(h: *const T) -> Result<&'a T, (MfStatus, String)> {
    h.as_ref().ok_or((MfStatus::NullPointer, "handle is null".into()))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of this thread's last failure, or NULL. Owned by the library.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` is NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a configuration from TOML text merged over the defaults. `toml`
/// may be NULL for the defaults alone.
///
/// # Safety
/// `toml` is NULL or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_config_new(toml: *const c_char, out: *mut *mut MfConfig) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        let src = if toml.is_null() { "" } else { text(toml, "toml")? };
        let cfg = ExperimentConfig::from_toml_with(src, &[]).map_err(|e| (MfStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(MfConfig(cfg)));
        Ok(())
    })
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_config_load(path: *const c_char, out: *mut *mut MfConfig) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        let p = text(path, "path")?;
        let cfg = ExperimentConfig::load(Some(Path::new(p)), &[]).map_err(|e| (MfStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(MfConfig(cfg)));
        Ok(())
    })
}

/// Applies one `key.path=value` override, e.g. `edge.predictor=dls`. The
/// configuration is unchanged if the result does not validate.
///
/// # Safety
/// `cfg` is a live handle; `assignment` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_config_set(cfg: *mut MfConfig, assignment: *const c_char) -> MfStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or((MfStatus::NullPointer, "handle is null".to_string()))?;
        let a = text(assignment, "assignment")?;
        let next = ExperimentConfig::from_toml_with(&c.0.to_toml(), &[a.to_string()])
            .map_err(|e| (MfStatus::Config, e.to_string()))?;
        c.0 = next;
        Ok(())
    })
}

/// The resolved configuration as TOML; free with [`mf_string_free`].
///
/// # Safety
/// `cfg` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_config_to_toml(cfg: *const MfConfig, out: *mut *mut c_char) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        *out = owned_string(handle(cfg)?.0.to_toml());
        Ok(())
    })
}

/// # Safety
/// `cfg` is NULL or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mf_config_free(cfg: *mut MfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Replays the configured trace on a fresh simulated continuum.
///
/// # Safety
/// `cfg` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_run(cfg: *const MfConfig, out: *mut *mut MfReport) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        let r = run_experiment(&handle(cfg)?.0).map_err(|e| (MfStatus::Experiment, e.to_string()))?;
        *out = Box::into_raw(Box::new(MfReport(r)));
        Ok(())
    })
}

/// Edge hit rate, in `[0, 1]`.
///
/// # Safety
/// `report` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_report_hit_rate(report: *const MfReport, out: *mut f64) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(report)?.0.replay.edge_hit_rate;
        Ok(())
    })
}

/// Mean demand latency in simulated milliseconds.
///
/// # Safety
/// `report` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_report_avg_latency_ms(report: *const MfReport, out: *mut f64) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(report)?.0.replay.latency.avg_ms;
        Ok(())
    })
}

/// Number of demand reads replayed.
///
/// # Safety
/// `report` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_report_demands(report: *const MfReport, out: *mut u64) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(report)?.0.replay.demands;
        Ok(())
    })
}

/// `layer,metric,value` CSV; free with [`mf_string_free`].
///
/// # Safety
/// `report` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_report_csv(report: *const MfReport, out: *mut *mut c_char) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        let mut buf = Vec::new();
        handle(report)?
            .0
            .write_csv(&mut buf)
            .map_err(|e| (MfStatus::Experiment, e.to_string()))?;
        *out = owned_string(String::from_utf8_lossy(&buf).into_owned());
        Ok(())
    })
}

/// Full JSON report including the resolved configuration; free with
/// [`mf_string_free`].
///
/// # Safety
/// `report` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_report_json(report: *const MfReport, out: *mut *mut c_char) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        *out = owned_string(handle(report)?.0.to_json());
        Ok(())
    })
}

/// # Safety
/// `report` is NULL or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mf_report_free(report: *mut MfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Counts events, list operations and path reuse in a trace file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_trace_stats(path: *const c_char, out: *mut MfTraceStats) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        let p = text(path, "path")?;
        let events = read_trace(Path::new(p)).map_err(|e| (MfStatus::Trace, e.to_string()))?;
        let s = compute_stats(&events);
        *out = MfTraceStats {
            events: s.events,
            list_ops: s.list_ops,
            unique_paths: s.unique_paths,
            once_paths: s.once_paths,
            unique_fraction: s.unique_fraction,
            once_fraction: s.once_fraction,
        };
        Ok(())
    })
}

/// A cache of at most `capacity` entries; 0 caches nothing. The handle
/// may be shared between threads.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_cache_new(capacity: usize, out: *mut *mut MfCache) -> MfStatus {
    guard(|| {
        out_ptr(out)?;
        *out = Box::into_raw(Box::new(MfCache(MetaCache::new(capacity))));
        Ok(())
    })
}

/// Stores a record unless a strictly newer one is cached. `stored` may be
/// NULL.
///
/// # Safety
/// `cache` is a live handle; `path` is a NUL-terminated string; `stored`
/// is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn mf_cache_put(
    cache: *const MfCache,
    path: *const c_char,
    is_directory: bool,
    size_bytes: u64,
    mtime: u64,
    stored: *mut bool,
) -> MfStatus {
    guard(|| {
        let c = handle(cache)?;
        let p = path_arg(path)?;
        let rec = if is_directory {
            MetadataRecord::directory(p, mtime, Vec::new())
        } else {
            MetadataRecord::file(p, size_bytes, mtime)
        };
        let r = c.0.put(rec);
        if !stored.is_null() {
            *stored = r.stored;
        }
        Ok(())
    })
}

/// Looks a path up, counting a hit or miss. `found` is set to false on a
/// miss and `entry` is then left untouched.
///
/// # Safety
/// `cache` is a live handle; `path` is a NUL-terminated string; `found`
/// and `entry` are writable.
#[no_mangle]
pub unsafe extern "C" fn mf_cache_lookup(
    cache: *const MfCache,
    path: *const c_char,
    found: *mut bool,
    entry: *mut MfEntry,
) -> MfStatus {
    guard(|| {
        out_ptr(found)?;
        out_ptr(entry)?;
        let c = handle(cache)?;
        let p = path_arg(path)?;
        match c.0.get(&p) {
            Some(r) => {
                *found = true;
                *entry = MfEntry {
                    is_directory: r.kind() == EntryKind::Directory,
                    is_live: r.is_live(),
                    size_bytes: r.size_bytes(),
                    mtime: r.mtime(),
                    children: r.children().len() as u64,
                };
            }
            None => *found = false,
        }
        Ok(())
    })
}

/// Marks `path` and everything cached below it deleted; `marked` receives
/// the number of entries touched and may be NULL.
///
/// # Safety
/// `cache` is a live handle; `path` is a NUL-terminated string; `marked`
/// is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn mf_cache_mark_deleted(cache: *const MfCache, path: *const c_char, marked: *mut usize) -> MfStatus {
    guard(|| {
        let c = handle(cache)?;
        let n = c.0.mark_subtree_deleted(&path_arg(path)?);
        if !marked.is_null() {
            *marked = n;
        }
        Ok(())
    })
}

/// Number of cached entries, or 0 for a NULL handle.
///
/// # Safety
/// `cache` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_cache_len(cache: *const MfCache) -> usize {
    cache.as_ref().map_or(0, |c| c.0.len())
}

/// Hits over lookups so far, or 0 for a NULL handle.
///
/// # Safety
/// `cache` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_cache_hit_rate(cache: *const MfCache) -> f64 {
    cache.as_ref().map_or(0.0, |c| c.0.stats().hit_rate())
}

/// # Safety
/// `cache` is NULL or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mf_cache_free(cache: *mut MfCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}
