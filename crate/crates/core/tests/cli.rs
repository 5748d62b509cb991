use std::fs;
use std::path::{Path, PathBuf};

use ruinopt::cli::{main_with_args, EXIT_OK, EXIT_VALIDATION};

fn cfg(name: &str) -> String {
    format!("{}/configs/{name}.cfg", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["ruinopt"];
    v.extend_from_slice(args);
    main_with_args(v)
}

fn out(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(path: &Path, idx: usize) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

#[test]
fn solve_examples_write_curve_and_metadata() {
    let d = tempfile::tempdir().unwrap();
    let expected = [("example1", vec!["A", "B", "A", "INT"]), ("example2", vec!["B", "A", "B", "INT"]), ("example3", vec!["B", "INT"])];
    for (name, seq) in expected {
        let o = d.path().join(name);
        assert_eq!(run(&["solve", "--config", &cfg(name), "--out-dir", &out(&o)]), EXIT_OK);
        let meta = json(o.join("curve.json"));
        let got: Vec<&str> = meta["regime_sequence"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(got, seq);
        let v: Vec<f64> = column(&o.join("curve.csv"), 1).iter().map(|s| s.parse().unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn policy_round_trip_keeps_theta_column() {
    let d = tempfile::tempdir().unwrap();
    let (a, b, c) = (d.path().join("solve"), d.path().join("fresh"), d.path().join("reread"));
    let cfg1 = cfg("example1");
    assert_eq!(run(&["solve", "--config", &cfg1, "--out-dir", &out(&a)]), EXIT_OK);
    assert_eq!(run(&["policy", "--config", &cfg1, "--out-dir", &out(&b)]), EXIT_OK);
    let curve = out(&a.join("curve.csv"));
    assert_eq!(run(&["policy", "--config", &cfg1, "--out-dir", &out(&c), "--curve", &curve]), EXIT_OK);
    let from_curve = column(&a.join("curve.csv"), 6);
    assert_eq!(column(&c.join("policy.csv"), 2), from_curve);
    assert_eq!(fs::read(b.join("policy.csv")).unwrap(), fs::read(c.join("policy.csv")).unwrap());
    let points = fs::read_to_string(c.join("policy_points.csv")).unwrap();
    assert!(points.contains(&format!("threshold,2ab/|b-a|,{}", 40.0f64 / 19.0)));
    assert_eq!(points.matches("switch,x").count(), 3);
}

#[test]
fn equal_rates_policy_uses_only_zero_and_limits() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["policy", "--config", &cfg("mu_eq_r"), "--out-dir", &out(d.path())]), EXIT_OK);
    let mut vals: Vec<String> = column(&d.path().join("policy.csv"), 2);
    vals.sort();
    vals.dedup();
    for v in &vals {
        assert!(["0", "1", "-20"].contains(&v.as_str()), "{v}");
    }
}

#[test]
fn equal_limits_omit_the_switch_threshold() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["policy", "--config", &cfg("symmetric"), "--out-dir", &out(d.path())]), EXIT_OK);
    let points = fs::read_to_string(d.path().join("policy_points.csv")).unwrap();
    assert!(!points.contains("2ab"));
    assert!(points.contains("threshold,(a-b)/2,0"));
}

#[test]
fn same_config_and_seed_give_identical_csvs() {
    let d = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let o = d.path().join(format!("run{k}"));
        let code = run(&["simulate", "--config", &cfg("example1"), "--out-dir", &out(&o), "--n-paths", "300", "--seed", "7", "--threads", &(k + 1).to_string()]);
        assert_eq!(code, EXIT_OK);
        bytes.push(fs::read(o.join("simulate.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn every_sidecar_carries_the_manifest_hash() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path();
    assert_eq!(run(&["solve", "--config", &cfg("example3"), "--out-dir", &out(o), "--seed", "11"]), EXIT_OK);
    let manifest = json(o.join("manifest.json"));
    let hash = manifest["manifest_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(json(o.join("curve.json"))["manifest_hash"], hash.as_str());
    assert_eq!(manifest["manifest"]["seed"], 11);
}

#[test]
fn validation_failures_exit_with_one() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.cfg");
    let text = fs::read_to_string(cfg("example1")).unwrap();
    fs::write(&bad, text.replace("b = 20", "b = 0")).unwrap();
    assert_eq!(run(&["solve", "--config", &out(&bad), "--out-dir", &out(d.path())]), EXIT_VALIDATION);
    fs::write(&bad, text.replace("sigma = 0.1", "sigma = x")).unwrap();
    assert_eq!(run(&["solve", "--config", &out(&bad), "--out-dir", &out(d.path())]), EXIT_VALIDATION);
    assert_eq!(run(&["solve", "--config", "/nonexistent.cfg"]), EXIT_VALIDATION);
    assert_eq!(run(&["frobnicate"]), EXIT_VALIDATION);
}

#[test]
fn oracle_verify_passes() {
    let d = tempfile::tempdir().unwrap();
    let code = run(&["verify", "--config", &cfg("oracle"), "--out-dir", &out(d.path()), "--n-paths", "4000"]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(d.path().join("verify.csv")).unwrap();
    assert!(text.starts_with("x0,target,p_hat,ci_half,diff,pass\n0,0.55,"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn noisy_verify_still_passes_the_gate() {
    let d = tempfile::tempdir().unwrap();
    let code = run(&["verify", "--config", &cfg("example1"), "--out-dir", &out(d.path()), "--n-paths", "100"]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn compare_lists_constant_and_constrained_variants() {
    let d = tempfile::tempdir().unwrap();
    let code = run(&["compare", "--config", &cfg("example1"), "--out-dir", &out(d.path()), "--n-paths", "200", "--x0", "1,5"]);
    assert_eq!(code, EXIT_OK);
    let meta = json(d.path().join("compare.json"));
    let labels: Vec<&str> = meta["policies"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for l in ["feedback", "const(a)", "const(-b)", "const(0)", "feedback_clamped_0_min(a;1)", "resolved_a_min(a;1)_b_1e-3"] {
        assert!(labels.contains(&l), "{labels:?}");
    }
    let rows = fs::read_to_string(d.path().join("compare.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * labels.len());
}
