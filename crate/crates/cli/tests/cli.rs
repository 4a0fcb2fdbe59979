use std::process::{Command, Output};

use serde_json::Value;

fn convlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convlab")).args(args).output().expect("binary runs")
}

fn first_line(out: &Output) -> Value {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    serde_json::from_str(text.lines().next().expect("one record")).unwrap()
}

#[test]
fn private_bound_example() {
    let out = convlab(&["bound", "private", "--eps", "0.6", "--delta", "0.6"]);
    assert_eq!(out.status.code(), Some(0));
    let v = first_line(&out);
    assert!((v["value"].as_f64().unwrap() - 3.673003).abs() <= 1e-6);
    assert_eq!(v["units"], "bits");
    assert!(v["alpha"].is_f64() && v["beta"].is_f64());
}

#[test]
fn quantum_bound_examples() {
    let v = first_line(&convlab(&["bound", "quantum", "--eps", "0.5"]));
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    let out = convlab(&["bound", "quantum", "--eps", "0.8"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(first_line(&out)["error"]["reason"], "eps ≥ 1/√2");
}

#[test]
fn exit_codes() {
    assert_eq!(convlab(&["bound", "private", "--eps", "x", "--delta", "0.1"]).status.code(), Some(1));
    assert_eq!(convlab(&["bound", "private", "--eps", "1.5", "--delta", "0.1"]).status.code(), Some(1));
    assert_eq!(convlab(&["bound", "private", "--eps", "0.8", "--delta", "0.8"]).status.code(), Some(2));
    assert_eq!(convlab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(convlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn nats_are_display_only() {
    let v = first_line(&convlab(&["--units", "nats", "bound", "quantum", "--eps", "0.5"]));
    assert!((v["value"].as_f64().unwrap() - std::f64::consts::LN_2).abs() <= 1e-12);
}

#[test]
fn region_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("region.csv");
    let out = convlab(&["region", "--step", "0.25", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eps,delta_max"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[2].1.to_string(), "0.866025404");
    assert!(rows.windows(2).all(|w| w[1].1 < w[0].1));
    // δ_max(0.25), looked up in reverse, returns ε within a step.
    let d = rows[1].1;
    let back = (1.0 - d * d).sqrt();
    assert!((back - 0.25).abs() <= 0.25);

    let bad = convlab(&["region", "--step", "0.1", "--out", "/nonexistent/dir/r.csv"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn certify_erasure() {
    let out = convlab(&["certify", "--kind", "erasure", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = first_line(&out);
    assert_eq!(v["verdict"], "antidegradable");
    assert!(v["residual"].as_f64().unwrap() <= 1e-6);
    let v = first_line(&convlab(&["certify", "--kind", "erasure", "--p", "0.3"]));
    assert_eq!(v["verdict"], "degradable");
    assert_eq!(convlab(&["certify", "--kind", "erasure", "--p", "0.5", "--threshold", "0"]).status.code(), Some(1));
}

#[test]
fn entropy_of_bell_state_with_input_hash() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bell.json");
    let mut m = vec![[0.0, 0.0]; 16];
    for i in [0, 3] {
        for j in [0, 3] {
            m[i * 4 + j] = [0.5, 0.0];
        }
    }
    let body = serde_json::json!({ "subsystems": [["R", 2], ["A", 2]], "matrix": m }).to_string();
    std::fs::write(&path, &body).unwrap();
    let p = path.to_str().unwrap();
    let v = first_line(&convlab(&["entropy", "hmin", "--state", p, "--target", "R", "--cond", "A"]));
    assert!((v["value"].as_f64().unwrap() + 1.0).abs() <= 1e-5);
    let hash = v["meta"]["inputs"][p].as_str().unwrap();
    assert_eq!(hash.len(), 16);

    std::fs::write(&path, "{not json").unwrap();
    assert_eq!(convlab(&["entropy", "hmin", "--state", p, "--target", "R"]).status.code(), Some(1));
}

#[test]
fn every_record_carries_meta() {
    let out = convlab(&["--seed", "3", "verify", "quantum-chain"]);
    assert_eq!(out.status.code(), Some(0));
    for line in String::from_utf8(out.stdout).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["meta"]["seed"], 3);
        assert!(v["meta"]["version"].is_string());
        assert!(v["meta"]["tolerances"]["chain"].as_f64().unwrap() > 0.0);
        assert!(v["meta"]["inputs"]["argv"].is_string());
    }
}

#[test]
fn failing_precondition_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"channel": {"kind": "erasure", "p": 0.3}}"#).unwrap();
    let out = convlab(&["verify", "quantum-chain", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(first_line(&out)["error"]["reason"], "precondition");
}

#[test]
fn search_then_evaluate() {
    let out = convlab(&["--seed", "5", "search", "private", "--kind", "erasure", "--p", "0.5", "--trials", "20", "--top", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = first_line(&out);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("code.json");
    std::fs::write(&path, v["code"].to_string()).unwrap();
    let ev = convlab(&["evaluate", "--code", path.to_str().unwrap(), "--kind", "erasure", "--p", "0.5", "--chain"]);
    assert_eq!(ev.status.code(), Some(0));
    let e = first_line(&ev);
    assert!((e["eps"].as_f64().unwrap() - v["eps"].as_f64().unwrap()).abs() <= 1e-9);
    assert_eq!(e["pass"], true);
}
