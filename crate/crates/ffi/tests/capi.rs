use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use metafetch_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = mf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(mf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn cache_round_trip() {
    unsafe {
        let mut cache = ptr::null_mut();
        assert_eq!(mf_cache_new(2, &mut cache), MfStatus::Ok);
        let mut stored = false;
        assert_eq!(mf_cache_put(cache, c("/d/f").as_ptr(), false, 42, 5, &mut stored), MfStatus::Ok);
        assert!(stored);
        // an older version is refused
        assert_eq!(mf_cache_put(cache, c("/d/f").as_ptr(), false, 1, 4, &mut stored), MfStatus::Ok);
        assert!(!stored);
        let (mut found, mut e) = (false, MfEntry::default());
        assert_eq!(mf_cache_lookup(cache, c("/d/f").as_ptr(), &mut found, &mut e), MfStatus::Ok);
        assert!(found);
        assert_eq!((e.size_bytes, e.mtime, e.is_directory, e.is_live), (42, 5, false, true));
        assert_eq!(mf_cache_lookup(cache, c("/d/g").as_ptr(), &mut found, &mut e), MfStatus::Ok);
        assert!(!found);
        assert_eq!(mf_cache_hit_rate(cache), 0.5);
        let mut marked = 0;
        assert_eq!(mf_cache_mark_deleted(cache, c("/d").as_ptr(), &mut marked), MfStatus::Ok);
        assert_eq!(marked, 1);
        assert_eq!(mf_cache_lookup(cache, c("/d/f").as_ptr(), &mut found, &mut e), MfStatus::Ok);
        assert!(found && !e.is_live);
        assert_eq!(mf_cache_len(cache), 1);
        mf_cache_free(cache);
    }
}

#[test]
fn null_and_bad_arguments_are_reported() {
    unsafe {
        let mut found = false;
        let mut e = MfEntry::default();
        assert_eq!(mf_cache_lookup(ptr::null(), c("/x").as_ptr(), &mut found, &mut e), MfStatus::NullPointer);
        let mut cache = ptr::null_mut();
        assert_eq!(mf_cache_new(1, ptr::null_mut()), MfStatus::NullPointer);
        assert_eq!(mf_cache_new(1, &mut cache), MfStatus::Ok);
        assert_eq!(mf_cache_lookup(cache, c("no/slash").as_ptr(), &mut found, &mut e), MfStatus::InvalidPath);
        assert!(last_error().contains("no/slash"));
        let bad = [0xffu8, 0];
        assert_eq!(mf_cache_lookup(cache, bad.as_ptr().cast(), &mut found, &mut e), MfStatus::InvalidUtf8);
        mf_cache_free(cache);
        mf_cache_free(ptr::null_mut());
        mf_config_free(ptr::null_mut());
        mf_report_free(ptr::null_mut());
        mf_string_free(ptr::null_mut());
        assert_eq!(mf_cache_len(ptr::null()), 0);
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(mf_config_new(c("topology = 7").as_ptr(), &mut cfg), MfStatus::Config);
        let here = last_error();
        std::thread::spawn(|| assert!(mf_last_error().is_null())).join().unwrap();
        assert_eq!(last_error(), here);
    }
}

#[test]
fn config_override_and_run() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(mf_config_new(ptr::null(), &mut cfg), MfStatus::Ok);
        for a in ["trace.generate.events=2000", "trace.generate.scan_max=100", "edge.predictor=dls"] {
            assert_eq!(mf_config_set(cfg, c(a).as_ptr()), MfStatus::Ok, "{a}");
        }
        assert_eq!(mf_config_set(cfg, c("edge.predictor=oracle").as_ptr()), MfStatus::Config);
        assert_eq!(mf_config_set(cfg, c("no equals sign").as_ptr()), MfStatus::Config);
        let mut toml = ptr::null_mut();
        assert_eq!(mf_config_to_toml(cfg, &mut toml), MfStatus::Ok);
        let text = CStr::from_ptr(toml).to_str().unwrap().to_string();
        mf_string_free(toml);
        assert!(text.contains("predictor = \"dls\""));

        let mut rep = ptr::null_mut();
        assert_eq!(mf_run(cfg, &mut rep), MfStatus::Ok);
        let (mut hit, mut lat, mut n) = (0.0, 0.0, 0);
        assert_eq!(mf_report_hit_rate(rep, &mut hit), MfStatus::Ok);
        assert_eq!(mf_report_avg_latency_ms(rep, &mut lat), MfStatus::Ok);
        assert_eq!(mf_report_demands(rep, &mut n), MfStatus::Ok);
        assert_eq!(n, 2000);
        assert!((0.0..=1.0).contains(&hit) && lat >= 0.0 && lat <= 40.0);
        let mut json = ptr::null_mut();
        assert_eq!(mf_report_json(rep, &mut json), MfStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        mf_string_free(json);
        assert_eq!(v["config"]["edge"]["predictor"], "dls");
        mf_report_free(rep);
        mf_config_free(cfg);
    }
}

#[test]
fn trace_stats_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.tsv");
    std::fs::write(
        &f,
        "1000\tlistStatus\t/a\n1001\tlistStatus\t/a\n1002\tlistStatus\t/b\n1003\topen\t/a/x\n",
    )
    .unwrap();
    unsafe {
        let mut s = MfTraceStats::default();
        assert_eq!(mf_trace_stats(c(f.to_str().unwrap()).as_ptr(), &mut s), MfStatus::Ok);
        assert_eq!((s.events, s.list_ops, s.unique_paths, s.once_paths), (4, 3, 2, 1));
        assert_eq!(mf_trace_stats(c("/no/such/file").as_ptr(), &mut s), MfStatus::Trace);
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

/// Compiles a C program against the generated header and the static
/// library. Skipped when no C compiler is on the path.
#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/metafetch.h");
    assert!(header.exists());
    let lib = target_dir().join("libmetafetch_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no cc or {} missing", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
