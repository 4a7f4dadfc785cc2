//! The `metafetch` binary end to end.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metafetch"))
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn records(text: &str) -> Vec<Vec<String>> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn stats(trace: &Path) -> HashMap<String, String> {
    records(&ok(bin().arg("stats").arg(trace).output().unwrap()))
        .into_iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect()
}

fn metric(rows: &[Vec<String>], layer: &str, name: &str) -> String {
    rows.iter()
        .find(|r| r[0] == layer && r[1] == name)
        .unwrap_or_else(|| panic!("no {layer}/{name}"))[2]
        .clone()
}

fn generate(dir: &Path, name: &str, events: &str) -> PathBuf {
    let out = dir.join(name);
    ok(bin()
        .args(["generate", "--events", events, "--scan-max", "200", "--seed", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap());
    out
}

#[test]
fn stats_matches_hand_counts() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("fixture.tsv");
    std::fs::write(
        &f,
        "10\tlistStatus\t/a\n\
         20\tlistStatus\t/a/b\n\
         30\tlistStatus\t/a\n\
         40\tcreate\t/a/b/c\n\
         50\tlistStatus\t/a/b/c\n",
    )
    .unwrap();
    let s = stats(&f);
    assert_eq!(s["events"], "5");
    assert_eq!(s["list_ops"], "4");
    assert_eq!(s["unique_paths"], "3");
    assert_eq!(s["once_paths"], "2");
    assert_eq!(s["unique_fraction"], "0.750000");
    assert_eq!(s["once_fraction"], "0.666667");
}

#[test]
fn stats_json_parses() {
    let dir = tempfile::tempdir().unwrap();
    let f = generate(dir.path(), "t.tsv", "2000");
    let v: serde_json::Value =
        serde_json::from_str(&ok(bin().arg("stats").arg(&f).arg("--json").output().unwrap())).unwrap();
    assert_eq!(v["list_ops"], 2000);
}

#[test]
fn missing_trace_fails_with_message() {
    let out = bin().args(["stats", "/definitely/not/here.tsv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/not/here.tsv"));
    let out = bin().args(["replay", "--trace", "/definitely/not/here.tsv"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn generate_is_deterministic_and_hits_targets() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.tsv", "20000");
    let b = generate(dir.path(), "b.tsv", "20000");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let s = stats(&a);
    let u: f64 = s["unique_fraction"].parse().unwrap();
    let h: f64 = s["once_fraction"].parse().unwrap();
    assert!((u - 0.6252).abs() <= 0.02, "{u}");
    assert!((h - 0.9233).abs() <= 0.02, "{h}");
}

#[test]
fn generate_writes_a_second_day() {
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("d1.tsv"), dir.path().join("d2.tsv"));
    ok(bin()
        .args(["generate", "--events", "3000", "--scan-max", "200", "--out"])
        .arg(&d1)
        .arg("--day2")
        .arg(&d2)
        .output()
        .unwrap());
    // the second day reuses and perturbs the first, so its length drifts
    let n: f64 = stats(&d2)["list_ops"].parse().unwrap();
    assert!((n - 3000.0).abs() <= 300.0, "{n}");
    let first = std::fs::read_to_string(&d2).unwrap();
    let ts: u64 = first.lines().next().unwrap().split('\t').next().unwrap().parse().unwrap();
    assert!(ts >= 86_400_000);
}

#[test]
fn replay_of_a_trace_file_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let t = generate(dir.path(), "t.tsv", "3000");
    let run = |csv: &Path, json: &Path| {
        ok(bin()
            .arg("replay")
            .arg("--trace")
            .arg(&t)
            .args(["--set", "edge.predictor=dls", "--set", "seed=9", "--csv"])
            .arg(csv)
            .arg("--json")
            .arg(json)
            .output()
            .unwrap())
    };
    let (c1, c2, j) = (dir.path().join("1.csv"), dir.path().join("2.csv"), dir.path().join("r.json"));
    run(&c1, &j);
    run(&c2, &j);
    let text = std::fs::read_to_string(&c1).unwrap();
    assert_eq!(text, std::fs::read_to_string(&c2).unwrap());
    let rows = records(&text);
    assert_eq!(metric(&rows, "all", "demands"), "3000");
    assert_eq!(metric(&rows, "all", "seed"), "9");
    assert_eq!(metric(&rows, "cloud", "capacity"), "unbounded");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&j).unwrap()).unwrap();
    assert_eq!(v["config"]["edge"]["predictor"], "dls");
    assert_eq!(v["seed"], 9);
}

#[test]
fn replay_reads_config_from_env_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "topology = \"EFC\"\n[fog]\ncapacity = \"2%\"\n[trace.generate]\nevents = 1500\nscan_max = 100\n",
    )
    .unwrap();
    let text = ok(bin()
        .args(["replay", "--print-config"])
        .env("METAFETCH_CONFIG", &cfg)
        .output()
        .unwrap());
    assert!(text.contains("topology = \"EFC\""));
    assert!(text.contains("capacity = \"2%\""));
    // untouched fog defaults survive a partial table
    assert!(text.contains("prefetch_ttl = 1"));
    let out = ok(bin().arg("replay").arg("--config").arg(&cfg).output().unwrap());
    let rows = records(&out);
    assert_eq!(metric(&rows, "all", "topology"), "EFC");
    assert_eq!(metric(&rows, "fog", "capacity"), "30");
}

#[test]
fn bad_override_is_rejected() {
    let out = bin().args(["replay", "--set", "edge.predictor=psychic"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["replay", "--set", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_pipeline_emits_every_sweep_point() {
    let dir = tempfile::tempdir().unwrap();
    let lat = dir.path().join("lat.csv");
    let out = ok(bin()
        .args([
            "bench-pipeline",
            "--requests",
            "100",
            "--rtt-ms",
            "50",
            "--capacities",
            "1,100",
            "--services",
            "2,10",
            "--latencies",
        ])
        .arg(&lat)
        .output()
        .unwrap());
    let rows = records(&out);
    assert_eq!(rows.len(), 5);
    let total = |cap: &str| -> f64 {
        rows.iter().find(|r| r[0] == "channel" && r[2] == cap).unwrap()[5].parse().unwrap()
    };
    assert_eq!(total("1"), 5000.0);
    assert_eq!(total("100"), 50.0);
    assert_eq!(rows[2][0], "dependent_chain");
    assert_eq!(rows[2][5], "500.000");
    assert_eq!(records(&std::fs::read_to_string(&lat).unwrap()).len(), 200);
    let one = ok(bin().args(["bench-pipeline", "--requests", "1", "--capacities", "1", "--services", "1"]).output().unwrap());
    let r = records(&one);
    assert_eq!(r[0][5], "40.000");
    assert_eq!(r[2][8], "40.000");
    assert_eq!(bin().args(["bench-pipeline", "--requests", "0"]).output().unwrap().status.code(), Some(1));
}
