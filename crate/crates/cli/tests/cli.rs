mod common;

use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_easy-iil"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.code().is_some(),
        "{args:?} was killed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn ok(dir: &Path, args: &[&str]) -> serde_json::Value {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    if out.stdout.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::from_slice(&out.stdout).unwrap()
    }
}

#[test]
fn collect_train_eval_replay_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), common::tiny().to_json()).unwrap();
    let c = ["--config", "c.json"];
    let with = |rest: &[&'static str]| -> Vec<&'static str> { c.iter().copied().chain(rest.iter().copied()).collect() };

    ok(d, &[&["collect"][..], &with(&["--label", "one-demo", "--out", "one.jsonl"])].concat());
    ok(
        d,
        &[&["collect"][..], &with(&["--label", "rest-demo", "--first-id", "1", "--episodes", "2", "--demo-log", "one.jsonl", "--out", "rest.jsonl"])].concat(),
    );
    let t = ok(d, &["train", "--log", "one.jsonl", "--log", "rest.jsonl", "--out", "ck.json"]);
    assert!(t["samples"].as_u64().unwrap() > 0);
    let e = ok(d, &[&["eval"][..], &with(&["--checkpoint", "ck.json"])].concat());
    assert_eq!(e["episodes"], 2);
    assert!((0.0..=100.0).contains(&e["success_rate"].as_f64().unwrap()));
    ok(
        d,
        &[
            &["collect"][..],
            &with(&[
                "--label", "correction", "--round", "1", "--first-id", "3", "--episodes", "2", "--demo-log", "one.jsonl", "--novice", "ck.json",
                "--out", "corr.jsonl",
            ]),
        ]
        .concat(),
    );
    for log in ["one.jsonl", "rest.jsonl", "corr.jsonl"] {
        let r = ok(d, &["replay", log]);
        assert_eq!(r["divergences"], 0, "{log}");
    }

    // A tampered step makes replay exit 1 and name the step.
    let text = std::fs::read_to_string(d.join("corr.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let i = lines.iter().position(|l| l.contains(r#""type":"step""#) && l.contains(r#""k":2,"#)).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&lines[i]).unwrap();
    v["action"]["dy"] = serde_json::Value::from(v["action"]["dy"].as_f64().unwrap() * 0.5 + 0.25);
    lines[i] = v.to_string();
    std::fs::write(d.join("bad.jsonl"), lines.join("\n") + "\n").unwrap();
    let out = run(d, &["replay", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["first"]["step"], 2);

    std::fs::write(d.join("r.csv"), "user_id,task,condition,P,E,F\nu1,t,a,3,4,4\nu1,t,b,6,2,2\n").unwrap();
    let a = ok(d, &["analyze", "--ratings", "r.csv", "--log", "corr.jsonl", "--log", "one.jsonl"]);
    assert_eq!(a["groups"].as_array().unwrap().len(), 2);
    assert_eq!(a["comparisons"][0]["pairs"], 1);
    assert_eq!(a["logs"][1]["offline"], 100.0);
}

#[test]
fn experiment_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), common::tiny().to_json()).unwrap();
    for out in ["a", "b"] {
        ok(d, &["experiment", "--config", "c.json", "--seeds", "0,1", "--out", out]);
    }
    for s in [0, 1] {
        let name = format!("easy_iil_seed{s}.jsonl");
        let a = std::fs::read(d.join("a").join(&name)).unwrap();
        assert_eq!(a, std::fs::read(d.join("b").join(&name)).unwrap());
        assert_eq!(ok(d, &["replay", &format!("a/{name}")])["divergences"], 0);
        assert!(d.join("a").join(format!("easy_iil_seed{s}_round1.ckpt.json")).exists());
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("a/report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"beta": 1.5}"#).unwrap();
    let out = run(dir.path(), &["experiment", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("c.json"), r#"{"betta": 0.5}"#).unwrap();
    assert_eq!(run(dir.path(), &["experiment", "--config", "c.json"]).status.code(), Some(2));
}
