use std::path::Path;
use std::process::{Command, Output};

use hsa_core::golden;
use serde_json::Value;

fn hsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn rates_single_row() {
    let out = hsa(&["rates", "--U", "2", "--V", "3", "--T", "1"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("U,V,T,feasible,R_X,R_Y,R_Z,R_Zsigma,baseline,active_branch")
    );
    assert_eq!(lines.next(), Some("2,3,1,true,1,1,1,4,5,V+T"));
}

#[test]
fn rates_sweep_grid() {
    let out = hsa(&["rates", "--sweep", "U=2..4", "V=1..3", "T=0..6"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 1 + 3 * 3 * 7);
    let out = hsa(&["--json", "rates", "--sweep", "U=2..2", "V=3..3", "T=3..3"]);
    let v = json(&out);
    assert_eq!(v[0]["feasible"], false);
    assert_eq!(v[0]["R_Zsigma"], Value::Null);
}

#[test]
fn rates_rejects_single_relay() {
    let out = hsa(&["rates", "--U", "1", "--V", "3", "--T", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("U=1"));
}

#[test]
fn build_then_audit_clean() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    let out = hsa(&[
        "--json",
        "build",
        "--U",
        "3",
        "--V",
        "2",
        "--T",
        "2",
        "--out",
        p(&s),
    ]);
    assert_eq!(code(&out), 0);
    let summary = json(&out);
    assert_eq!(summary["n_source"], 4);
    let scheme: Value = serde_json::from_str(&std::fs::read_to_string(&s).unwrap()).unwrap();
    assert_eq!(scheme["H"]["rows"], 6);
    assert_eq!(scheme["H"]["cols"], 4);
    let out = hsa(&["--json", "audit", "--scheme", p(&s)]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["relay_ok"], true);
}

#[test]
fn build_refuses_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    let out = hsa(&["build", "--U", "2", "--V", "3", "--T", "3", "--out", p(&s)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("T >= (U-1)V"));
    assert!(!s.exists());
}

#[test]
fn build_baseline_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b.json");
    let out = hsa(&[
        "build",
        "--baseline",
        "--U",
        "2",
        "--V",
        "2",
        "--T",
        "1",
        "--out",
        p(&b),
    ]);
    assert_eq!(code(&out), 0);
    let scheme: Value = serde_json::from_str(&std::fs::read_to_string(&b).unwrap()).unwrap();
    assert_eq!(scheme["kind"], "baseline");
    assert_eq!(
        scheme["H"]["data"],
        serde_json::json!([1, 0, 0, 0, 1, 0, 0, 0, 1, 4, 4, 4])
    );
}

#[test]
fn build_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        assert_eq!(
            code(&hsa(&[
                "build",
                "--U",
                "2",
                "--V",
                "3",
                "--T",
                "2",
                "--out",
                p(path)
            ])),
            0
        );
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let scheme = hsa_core::CoefficientScheme::from_json(&text).unwrap();
    assert_eq!(scheme.to_json(true).unwrap() + "\n", text);
}

#[test]
fn simulate_reports_rates_and_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    let t = dir.path().join("t.json");
    std::fs::write(&s, golden::three_user_clusters_json()).unwrap();
    let out = hsa(&[
        "--json",
        "--seed",
        "7",
        "simulate",
        "--scheme",
        p(&s),
        "--L",
        "8",
        "--transcript",
        p(&t),
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["decoded"], v["truth"]);
    assert_eq!(v["rates"]["R_Zsigma"], 4.0);
    assert_eq!(v["decoded"].as_array().unwrap().len(), 8);
    let transcript: Value = serde_json::from_str(&std::fs::read_to_string(&t).unwrap()).unwrap();
    assert_eq!(transcript["L"], 8);
    assert_eq!(transcript["X"]["1,1"].as_array().unwrap().len(), 8);
    let again = hsa(&[
        "--json",
        "--seed",
        "7",
        "simulate",
        "--scheme",
        p(&s),
        "--L",
        "8",
    ]);
    assert_eq!(json(&again)["decoded"], v["decoded"]);
}

#[test]
fn simulate_rejects_corrupt_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    let text = golden::three_user_clusters_json().replacen("\"data\":[1,", "\"data\":[2,", 1);
    std::fs::write(&s, text).unwrap();
    assert_eq!(code(&hsa(&["simulate", "--scheme", p(&s)])), 4);
    std::fs::write(&s, "not json").unwrap();
    assert_eq!(code(&hsa(&["simulate", "--scheme", p(&s)])), 4);
}

#[test]
fn audit_geometric_nodes_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    std::fs::write(&s, golden::geometric_nodes_json(17, 3)).unwrap();
    let out = hsa(&["--json", "audit", "--scheme", p(&s)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["violations"], serde_json::json!([]));
    assert_eq!(v["checks_performed"], 88);
}

#[test]
fn audit_flags_tampered_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    // two users with identical keys but zero row sum kept
    let json_text = r#"{"U":2,"V":2,"T":1,"q":5,"H":{"q":5,"rows":4,"cols":3,"data":[1,0,0,1,0,0,0,1,0,3,4,0]}}"#;
    std::fs::write(&s, json_text).unwrap();
    let out = hsa(&["--json", "audit", "--scheme", p(&s)]);
    assert_eq!(code(&out), 5);
    let v = json(&out);
    assert_eq!(v["relay_ok"], false);
    let first = &v["violations"][0];
    assert_eq!(first["kind"], "relay");
    assert_eq!(first["collusion"], serde_json::json!([]));
}

#[test]
fn audit_budget_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    std::fs::write(&s, golden::geometric_nodes_json(17, 3)).unwrap();
    let out = hsa(&["audit", "--scheme", p(&s), "--budget", "10"]);
    assert_eq!(code(&out), 6);
    assert!(String::from_utf8_lossy(&out.stderr).contains("88"));
}

#[test]
fn audit_exact_small_field() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    assert_eq!(
        code(&hsa(&[
            "build",
            "--U",
            "2",
            "--V",
            "2",
            "--T",
            "1",
            "--q",
            "5",
            "--out",
            p(&s)
        ])),
        0
    );
    let out = hsa(&["--json", "audit", "--scheme", p(&s), "--exact"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["exact_ok"], true);
    assert_eq!(v["exact"].as_array().unwrap().len(), 5 * 3);
    let out = hsa(&["audit", "--scheme", p(&s), "--exact", "--q-cap", "100"]);
    assert_eq!(code(&out), 6);
}

#[test]
fn attack_on_forced_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.json");
    let out = hsa(&[
        "build",
        "--force-infeasible",
        "--U",
        "2",
        "--V",
        "2",
        "--T",
        "2",
        "--out",
        p(&f),
    ]);
    assert_eq!(code(&out), 0);
    let scheme: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    assert_eq!(scheme["label"], "insecure_by_construction");
    let out = hsa(&["--json", "attack", "--scheme", p(&f), "--rounds", "100"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["successes"], 100);
    let out = hsa(&[
        "--json",
        "attack",
        "--scheme",
        p(&f),
        "--rounds",
        "5",
        "--zero-inputs",
    ]);
    assert_eq!(json(&out)["last_recovered"], serde_json::json!([0]));
}

#[test]
fn attack_on_geometric_nodes_with_oversized_set() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    std::fs::write(&s, golden::geometric_nodes_json(17, 3)).unwrap();
    let out = hsa(&["--json", "attack", "--scheme", p(&s), "--rounds", "20"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["successes"], 20);
    assert_eq!(v["colluders"].as_array().unwrap().len(), 4);
}

#[test]
fn compare_table() {
    for (shape, optimal, gap) in [
        (["3", "2", "2"], 4, 1),
        (["2", "3", "1"], 4, 1),
        (["2", "2", "1"], 3, 0),
    ] {
        let out = hsa(&[
            "--json", "compare", "--U", shape[0], "--V", shape[1], "--T", shape[2],
        ]);
        assert_eq!(code(&out), 0);
        let v = json(&out);
        assert_eq!(v["optimal"], optimal);
        assert_eq!(v["gap"], gap);
    }
    assert_eq!(
        code(&hsa(&["compare", "--U", "2", "--V", "3", "--T", "3"])),
        3
    );
}
