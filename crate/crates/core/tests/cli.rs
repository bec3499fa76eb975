//! End-to-end runs of the `accim` binary: exit codes, manifests and
//! reproducible output files.

use std::path::Path;
use std::process::Command;

use serde_json::Value;
use sha2::{Digest, Sha256};

fn accim(args: &[&str], config: Option<&str>, dir: &Path) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_accim"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(body) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, body).unwrap();
        cmd.arg("--config").arg(path);
    }
    let o = cmd.output().unwrap();
    o.status.code().expect("exited normally")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const FAST_CHECK: &str = r#"{"hole": [], "check": {"hole_size": false, "orbit_horizon": 200}}"#;

#[test]
fn check_without_hole_exits_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(accim(&["check"], Some(FAST_CHECK), d.path()), 0);
    let r = read_json(&d.path().join("out/report.json"));
    assert_eq!(r["passed"], true);
    assert_eq!(r["class_m"]["orbit_distance"].as_f64(), Some(1.0));
    assert_eq!(r["class_m"]["clause_a"], true);
}

#[test]
fn unknown_key_is_a_validation_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        accim(&["escape"], Some(r#"{"holes": [[0.1, 0.2]]}"#), d.path()),
        1
    );
    assert!(!d.path().join("out/manifest.json").exists());
}

#[test]
fn zero_samples_names_the_field() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_accim"))
        .args(["escape", "--out"])
        .arg(d.path().join("out"))
        .arg("--config")
        .arg({
            let p = d.path().join("c.json");
            std::fs::write(&p, r#"{"samples": 0}"#).unwrap();
            p
        })
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("samples"));
}

#[test]
fn bad_hole_and_parameter_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        accim(&["accim"], Some(r#"{"hole": [[0.3, 0.2]]}"#), d.path()),
        1
    );
    assert_eq!(accim(&["accim"], Some(r#"{"a": 2.5}"#), d.path()), 1);
    assert_eq!(accim(&["accim"], Some("not json"), d.path()), 1);
}

const ESCAPE: &str = r#"{"hole": [[0.28, 0.30]], "samples": 20000, "escape": {"n_max": 20, "ulam": false, "conditional": null}}"#;

fn csv_bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "dat"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(
        accim(&["escape", "--threads", "1"], Some(ESCAPE), a.path()),
        0
    );
    assert_eq!(
        accim(&["escape", "--threads", "3"], Some(ESCAPE), b.path()),
        0
    );
    let (x, y) = (
        csv_bodies(&a.path().join("out")),
        csv_bodies(&b.path().join("out")),
    );
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn seed_changes_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(accim(&["escape", "--seed", "1"], Some(ESCAPE), a.path()), 0);
    assert_eq!(accim(&["escape", "--seed", "2"], Some(ESCAPE), b.path()), 0);
    assert_ne!(
        csv_bodies(&a.path().join("out")),
        csv_bodies(&b.path().join("out"))
    );
}

#[test]
fn manifest_digests_match_files() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(accim(&["escape"], Some(ESCAPE), d.path()), 0);
    let out = d.path().join("out");
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["command"], "escape");
    let files = m["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["name"] == "report.json"));
    for f in files {
        let body = std::fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&body)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(f["sha256"].as_str().unwrap(), hex);
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, body.len());
    }
    let digest = m["config_sha256"].as_str().unwrap();
    let csv = std::fs::read_to_string(out.join("survival.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        format!("# config_sha256={digest}")
    );
    assert!(csv.lines().nth(1).unwrap().contains('['));
}

#[test]
fn failed_check_exits_three() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"hole": [[-0.1, 0.1]], "check": {"hole_size": false, "orbit_horizon": 200}}"#;
    assert_eq!(accim(&["check"], Some(cfg), d.path()), 3);
    let r = read_json(&d.path().join("out/report.json"));
    assert_eq!(r["passed"], false);
    assert!(d.path().join("out/manifest.json").exists());
}
