use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const LOCK: &str = r#"
seed = 5
duration = 120.0
hub = "smartthings"

[[device]]
model = "yale_lock"

[[event]]
time = 30.0
device = 0
event = "lock"
"#;

const IDLE_HUE: &str = r#"
seed = 9
duration = 1800.0
hub = "hue"

[[device]]
model = "philips_hue_color"
"#;

const BUSY: &str = r#"
seed = 21
duration = 600.0
random_events = 12
noise_rate = 0.3
retransmission_rate = 0.1

[[device]]
model = "smt_outlet"

[[device]]
model = "sengled_color"

[[device]]
model = "smt_multisensor"
"#;

fn zbinfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zbinfer")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes `scenario` and generates it, returning the capture and truth paths.
fn generated(dir: &TempDir, name: &str, scenario: &str) -> (PathBuf, PathBuf) {
    let cfg = dir.path().join(format!("{name}.toml"));
    let cap = dir.path().join(format!("{name}.pcap"));
    let truth = dir.path().join(format!("{name}.json"));
    fs::write(&cfg, scenario).unwrap();
    let o = zbinfer(&["generate", s(&cfg), "-o", s(&cap), "-t", s(&truth)]);
    assert!(o.status.success(), "{}", stderr(&o));
    (cap, truth)
}

#[test]
fn analyze_reports_the_lock_event() {
    let dir = TempDir::new().unwrap();
    let (cap, _) = generated(&dir, "lock", LOCK);
    let o = zbinfer(&["analyze", s(&cap)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("2 nodes, 1 identifications"), "{out}");
    let ids: Vec<&str> = out
        .lines()
        .skip_while(|l| *l != "identifications:")
        .skip(1)
        .take_while(|l| !l.is_empty())
        .collect();
    assert_eq!(ids.len(), 1, "{out}");
    assert!(ids[0].contains("DoorLock") && ids[0].contains("[lock_unlock]"), "{}", ids[0]);
    assert!(ids[0].trim_start().starts_with("1600000030."), "{}", ids[0]);
}

#[test]
fn empty_capture_is_not_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("empty.toml");
    fs::write(&cfg, "seed = 1\nduration = 0.0\n").unwrap();
    let cap = dir.path().join("empty.pcap");
    let truth = dir.path().join("empty.json");
    assert!(zbinfer(&["generate", s(&cfg), "-o", s(&cap), "-t", s(&truth)]).status.success());
    let o = zbinfer(&["analyze", s(&cap)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("0 nodes, 0 identifications"), "{}", stdout(&o));
}

#[test]
fn malformed_rules_fail() {
    let dir = TempDir::new().unwrap();
    let (cap, _) = generated(&dir, "lock", LOCK);
    let rules = dir.path().join("rules.toml");
    fs::write(&rules, "[[rule]]\nid = \n").unwrap();
    let o = zbinfer(&["analyze", s(&cap), "--rules", s(&rules)]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
}

#[test]
fn missing_capture_fails() {
    let o = zbinfer(&["analyze", "/nonexistent/capture.pcap"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no such file"));
}

#[test]
fn idle_bulb_signature_has_two_intervals() {
    let dir = TempDir::new().unwrap();
    let (cap, _) = generated(&dir, "hue", IDLE_HUE);
    let store = dir.path().join("store.jsonl");
    let o = zbinfer(&["signatures", "extract", s(&cap), "--store", s(&store), "--label", "hue"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ris: Vec<String> = stdout(&o)
        .lines()
        .filter_map(|l| l.trim().strip_prefix("RI "))
        .map(|l| l.split(' ').next().unwrap().to_string())
        .collect();
    assert_eq!(ris, ["1s", "2m"]);

    let o = zbinfer(&["signatures", "match", s(&cap), "--store", s(&store), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let matches = v["signature_matches"].as_array().unwrap();
    assert_eq!(matches.len(), 1);
    assert_eq!(matches[0]["device_label"], "hue");

    let again = zbinfer(&["signatures", "extract", s(&cap), "--store", s(&store), "--label", "hue"]);
    assert!(!again.status.success(), "duplicate label accepted");
}

#[test]
fn extraction_rejects_active_node() {
    let dir = TempDir::new().unwrap();
    let (cap, _) = generated(&dir, "lock", LOCK);
    let store = dir.path().join("store.jsonl");
    let o = zbinfer(&["signatures", "extract", s(&cap), "--store", s(&store), "--label", "lock"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("is not idle"), "{}", stderr(&o));
    assert!(!store.exists() || fs::read_to_string(&store).unwrap().trim().is_empty());
}

#[test]
fn extraction_needs_enough_bursts() {
    let dir = TempDir::new().unwrap();
    // Five-minute reports starting in the first 2.5 minutes give exactly two bursts in nine minutes.
    let short = "seed = 4\nduration = 540.0\n\n[[device]]\nmodel = \"smt_multisensor\"\n";
    let (cap, _) = generated(&dir, "short", short);
    let store = dir.path().join("store.jsonl");
    let o = zbinfer(&["signatures", "extract", s(&cap), "--store", s(&store), "--label", "hue"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("concordant bursts"), "{}", stderr(&o));
}

#[test]
fn extraction_requires_node_when_ambiguous() {
    let dir = TempDir::new().unwrap();
    let (cap, _) = generated(&dir, "busy", BUSY);
    let store = dir.path().join("store.jsonl");
    let o = zbinfer(&["signatures", "extract", s(&cap), "--store", s(&store), "--label", "x"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--node"), "{}", stderr(&o));
}

#[test]
fn generation_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, ta) = generated(&dir, "a", BUSY);
    let (b, tb) = generated(&dir, "b", BUSY);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&ta).unwrap(), fs::read(&tb).unwrap());

    let cfg = dir.path().join("a.toml");
    let c = dir.path().join("c.pcap");
    let tc = dir.path().join("c.json");
    assert!(zbinfer(&["generate", s(&cfg), "-o", s(&c), "-t", s(&tc), "--seed", "22"]).status.success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn json_predictions_evaluate_cleanly() {
    let dir = TempDir::new().unwrap();
    let (cap, truth) = generated(&dir, "busy", BUSY);
    let pred = dir.path().join("pred.json");
    let o = zbinfer(&["analyze", s(&cap), "--json", "-o", s(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = zbinfer(&["evaluate", s(&pred), s(&truth)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("Accuracy 100.0%"), "{out}");
    assert!(out.contains("FP 0"), "{out}");

    let o = zbinfer(&["evaluate", s(&pred), s(&truth), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["events"]["fn"], 0);
    assert_eq!(v["events"]["tp"], v["outcomes"].as_array().unwrap().len());
}

#[test]
fn mismatched_capture_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (cap, _) = generated(&dir, "busy", BUSY);
    let (_, other_truth) = generated(&dir, "lock", LOCK);
    let pred = dir.path().join("pred.json");
    assert!(zbinfer(&["analyze", s(&cap), "--json", "-o", s(&pred)]).status.success());
    let o = zbinfer(&["evaluate", s(&pred), s(&other_truth)]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn no_events_means_undefined_rates() {
    let dir = TempDir::new().unwrap();
    let (cap, truth) = generated(&dir, "hue", IDLE_HUE);
    let pred = dir.path().join("pred.json");
    assert!(zbinfer(&["analyze", s(&cap), "--json", "-o", s(&pred)]).status.success());
    let o = zbinfer(&["evaluate", s(&pred), s(&truth)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("TPR undefined"), "{}", stdout(&o));
}

#[test]
fn map_exports_csv() {
    let dir = TempDir::new().unwrap();
    let (cap, _) = generated(&dir, "busy", BUSY);
    let csv = dir.path().join("map.csv");
    let o = zbinfer(&["map", s(&cap), "--export", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 4, "{text}");
}
