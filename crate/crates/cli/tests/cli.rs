use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypdyn")).args(args).output().unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("hypdyn-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn constants_for_the_horseshoe() {
    let v = json(&["constants", "--model", "horseshoe", "--delta", "1e-6"]);
    let s = &v["result"]["summary"];
    assert_eq!(s["K"], 1.5);
    assert_eq!(s["k"], 14);
    assert_eq!(s["count"], 16384);
    assert_eq!(v["header"]["parameters"]["delta"], 1e-6);
    assert_eq!(v["header"]["seed"], 1729);
    assert!(v["header"]["version"].is_string());
}

#[test]
fn entropy_of_full_shift_file() {
    let d = scratch("entropy");
    let path = d.join("full2.mat");
    std::fs::write(&path, "1 1\n1 1\n").unwrap();
    let v = json(&["entropy", "--matrix", path.to_str().unwrap()]);
    let h = v["result"]["entropy"].as_f64().unwrap();
    assert!((h - 2f64.ln()).abs() <= 1e-12);
    let v = json(&["entropy", "--k", "5"]);
    assert!((v["result"]["entropy"].as_f64().unwrap() - 2f64.ln()).abs() <= 1e-10);
}

#[test]
fn reproduce_exits_zero_with_five_rows() {
    let out = run(&["reproduce-horseshoe"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["matches"] == true));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["constants", "--delta", "abc"]).status.code(), Some(2));
    assert_eq!(run(&["close", "--model", "catmap", "--point", "0.1,0.2", "--N", "3"]).status.code(), Some(1));
    assert_eq!(run(&["partition", "--model", "catmap"]).status.code(), Some(1));
    assert_eq!(run(&["constants", "--model", "/nonexistent/model.txt"]).status.code(), Some(1));
    let err = run(&["splitting", "--point", "1"]);
    assert_eq!(err.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&err.stderr).contains("two coordinates"));
}

#[test]
fn outputs_are_deterministic() {
    for args in [
        &["shadow", "--model", "catmap", "--count", "4", "--seed", "7"][..],
        &["verify", "--k", "2", "--seed", "3"][..],
        &["partition", "--k", "3", "--format", "csv"][..],
    ] {
        let a = run(args);
        let b = run(args);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
    }
    let one = json(&["shadow", "--model", "catmap", "--count", "4", "--jobs", "1"]);
    let four = json(&["shadow", "--model", "catmap", "--count", "4", "--jobs", "4"]);
    assert_eq!(one["result"], four["result"]);
    let other = json(&["shadow", "--model", "catmap", "--seed", "8"]);
    assert_ne!(one["result"]["orbits"][0], other["result"]["orbits"][0]);
}

#[test]
fn partition_file_round_trip() {
    let d = scratch("partition");
    let out = run(&["partition", "--k", "2", "--format", "csv", "--out", d.to_str().unwrap()]);
    assert!(out.status.success());
    let file = d.join("partition.csv");
    let text = std::fs::read_to_string(&file).unwrap();
    assert!(text.starts_with("# tool = hypdyn"));
    let a = json(&["matrix", "--partition", file.to_str().unwrap()]);
    let b = json(&["matrix", "--k", "2"]);
    assert_eq!(a["result"]["rows"], b["result"]["rows"]);
    assert_eq!(a["result"]["size"], 8);
}

#[test]
fn model_file_overrides_merge() {
    let d = scratch("model");
    let path = d.join("slow.model");
    std::fs::write(&path, "# contraction override\nkind = horseshoe\nlambda = 0.5\n").unwrap();
    let v = json(&["constants", "--model", path.to_str().unwrap(), "--beta", "1"]);
    let l = &v["result"]["ledger"];
    assert_eq!(l["lambda"], 0.5);
    assert!((l["alpha_over_beta"].as_f64().unwrap() - 0.5 / 1.5).abs() <= 1e-12);
    assert_eq!(l["delta0"], 2.0);
    std::fs::write(&path, "kind = horseshoe\nlambda = zero\n").unwrap();
    let out = run(&["constants", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn periodic_counts_and_closing() {
    let v = json(&["count-periodic", "--k", "1", "--N", "8"]);
    assert_eq!(v["result"]["agree"], true);
    assert_eq!(v["result"]["counts"][7]["trace"], "256");
    let v = json(&["close", "--model", "catmap", "--point", "0.2000001,0.4", "--N", "2"]);
    assert!(v["result"]["periodicity_residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn decode_and_itinerary_agree() {
    let v = json(&["decode", "--word", "0,1,1,0,1,0,1,1,0 -4", "--k", "0"]);
    let x = v["result"]["point"]["x"].as_f64().unwrap();
    let y = v["result"]["point"]["y"].as_f64().unwrap();
    let p = format!("{x},{y}");
    let it = json(&["itinerary", "--point", &p, "--N", "2"]);
    assert_eq!(it["result"]["window"]["symbols"], serde_json::json!([1, 0, 1, 0, 1]));
}
