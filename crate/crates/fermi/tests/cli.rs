//! End-to-end runs of the `fermi` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn workdir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fermi-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn fermi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fermi"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn summary(dir: &Path, cmd: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{cmd}.json"))).unwrap()).unwrap()
}

fn preset(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn bad_config_exits_2_and_writes_nothing() {
    let d = workdir("bad");
    let cases = [("malformed.json", "{\"seed\": "), ("unknown.json", "{\"ensemble\": {\"n_orbit\": 5}}")];
    for (name, text) in cases {
        let cfg = d.join(name);
        std::fs::write(&cfg, text).unwrap();
        let out = d.join(format!("{name}.out"));
        let r = fermi(&["ensemble", "--config", cfg.to_str().unwrap()], &out);
        assert_eq!(r.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
    }
}

#[test]
fn no_cone_exits_3() {
    let d = workdir("nocone");
    let r = fermi(&["cone-report"], &d.join("out"));
    assert_eq!(r.status.code(), Some(3));
    assert!(!d.join("out").join("cone-report.json").exists());
}

#[test]
fn validate_normal_forms_slopes() {
    let d = workdir("validate");
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"validate": {"samples": 100}}"#).unwrap();
    let r = fermi(&["validate-normal-forms", "--config", cfg.to_str().unwrap()], &d);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(d.join("normal_forms.csv")).unwrap();
    assert!(csv.starts_with("# fermi validate-normal-forms"));
    let s = summary(&d, "validate-normal-forms");
    let maps = s["result"]["maps"].as_array().unwrap();
    assert_eq!(maps.len(), 6);
    for m in maps {
        let slope = m["slope"].as_f64().unwrap();
        assert!((slope + 2.0).abs() < 0.5, "{m}");
    }
}

#[test]
fn null_control_does_not_escape() {
    let d = workdir("null");
    let r = fermi(&["escape", "--config", &preset("null_control.json")], &d);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let s = &summary(&d, "escape")["result"];
    let fraction = s["fraction"].as_f64().unwrap();
    assert!(fraction < 0.15, "fraction {fraction}");
    let (lo, hi) = (s["drift"]["lo"].as_f64().unwrap(), s["drift"]["hi"].as_f64().unwrap());
    assert!(lo <= 0.0 && 0.0 <= hi, "drift interval [{lo}, {hi}]");
}

#[test]
fn outputs_reproducible_across_threads() {
    let d = workdir("repro");
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 9, "ensemble": {"n_orbits": 300, "horizon": 20, "n0": 10}}"#).unwrap();
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let out = d.join(format!("t{threads}"));
        let r = fermi(&["ensemble", "--no-timestamp", "--threads", threads, "--config", cfg.to_str().unwrap()], &out);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
        runs.push(out);
    }
    for name in ["orbits.csv", "series.csv", "ensemble.json"] {
        let a = std::fs::read(runs[0].join(name)).unwrap();
        let b = std::fs::read(runs[1].join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}
