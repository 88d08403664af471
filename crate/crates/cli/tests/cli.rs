// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end runs of the `n2g` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};
use tempfile::TempDir;

fn n2g(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_n2g"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn n2g_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_n2g"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn s1_entry(index: u32) -> Value {
    json!({
        "layer": 0,
        "index": index,
        "activating": {"B": 2.0},
        "required_context": ["A"],
        "window": 3,
        "examples": [["x", "A", "B"], ["A", "y", "B"], ["A", "y", "z", "B"]]
    })
}

/// Writes a bare-list synthetic spec.
fn write_spec(dir: &Path, entries: Vec<Value>) -> PathBuf {
    let path = dir.join("spec.json");
    fs::write(&path, Value::Array(entries).to_string()).unwrap();
    path
}

fn s1_corpus(dir: &Path, indices: &[u32]) -> PathBuf {
    let spec = write_spec(dir, indices.iter().map(|&i| s1_entry(i)).collect());
    let out = dir.join("corpus");
    ok(&n2g(&[
        "build",
        "--synthetic",
        s(&spec),
        "--out",
        s(&out),
        "--no-holdout",
    ]));
    out
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    files
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn fifty_synthetic_neurons_give_fifty_graphs() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    ok(&n2g(&[
        "generate",
        "--kind",
        "exact",
        "--count",
        "50",
        "--layers",
        "2",
        "--seed",
        "4",
        "--out",
        s(&spec),
    ]));
    let out = tmp.path().join("corpus");
    ok(&n2g(&[
        "build",
        "--synthetic",
        s(&spec),
        "--out",
        s(&out),
        "--seed",
        "9",
    ]));
    let m = manifest(&out);
    assert_eq!(m["neurons"].as_array().unwrap().len(), 50);
    assert_eq!(m["seed"], 9);
    assert!(m["failures"].as_array().unwrap().is_empty());
    for entry in m["neurons"].as_array().unwrap() {
        assert!(out.join(entry["file"].as_str().unwrap()).is_file());
    }
}

#[test]
fn all_zero_neuron_is_reported_degenerate() {
    let tmp = TempDir::new().unwrap();
    let dump = tmp.path().join("dump.jsonl");
    // Records that start at the pivot answer every query from the dump alone.
    let lines = [
        json!({"layer": 0, "neuron": 7, "tokens": ["B"], "activations": [2.0], "max_activation": 2.0}),
        json!({"layer": 0, "neuron": 7, "tokens": ["B", "x"], "activations": [2.0, 0.0], "max_activation": 2.0}),
        json!({"layer": 0, "neuron": 8, "tokens": ["x", "y"], "activations": [0.0, 0.0]}),
        json!({"layer": 0, "neuron": 8, "tokens": ["y"], "activations": [0.0]}),
    ];
    fs::write(
        &dump,
        lines.iter().map(|l| format!("{l}\n")).collect::<String>(),
    )
    .unwrap();
    let out = tmp.path().join("corpus");
    let run = n2g(&[
        "build",
        "--activations",
        s(&dump),
        "--out",
        s(&out),
        "--no-holdout",
    ]);
    ok(&run);
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("0:8: degenerate"), "{stderr}");
    let m = manifest(&out);
    assert_eq!(
        m["failures"],
        json!([{"neuron": {"layer": 0, "index": 8}, "reason": "degenerate"}])
    );
    assert!(out.join("layer_0/neuron_7.json").is_file());
    assert!(!out.join("layer_0/neuron_8.json").exists());
}

#[test]
fn total_failure_is_nonzero() {
    let tmp = TempDir::new().unwrap();
    let dump = tmp.path().join("dump.jsonl");
    fs::write(
        &dump,
        "{\"layer\":0,\"neuron\":1,\"tokens\":[\"a\"],\"activations\":[0.0]}\n",
    )
    .unwrap();
    let out = tmp.path().join("corpus");
    let run = n2g(&["build", "--activations", s(&dump), "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    ok(&n2g(&[
        "generate",
        "--kind",
        "trend",
        "--count",
        "12",
        "--seed",
        "2",
        "--out",
        s(&spec),
    ]));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        ok(&n2g(&[
            "build",
            "--synthetic",
            s(&spec),
            "--out",
            s(dir),
            "--seed",
            "5",
            "--parallelism",
            threads,
        ]));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() > 3);
    assert_eq!(ta, tb);
}

#[test]
fn existing_corpus_is_not_replaced_without_flag() {
    let tmp = TempDir::new().unwrap();
    let out = s1_corpus(tmp.path(), &[7]);
    let before = tree(&out);
    let spec = tmp.path().join("spec.json");
    fs::write(&spec, json!([s1_entry(7), s1_entry(8)]).to_string()).unwrap();
    let run = n2g(&[
        "build",
        "--synthetic",
        s(&spec),
        "--out",
        s(&out),
        "--no-holdout",
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(tree(&out), before);

    ok(&n2g(&[
        "build",
        "--synthetic",
        s(&spec),
        "--out",
        s(&out),
        "--no-holdout",
        "--overwrite",
    ]));
    assert_eq!(manifest(&out)["neurons"].as_array().unwrap().len(), 2);

    // A directory with other contents is never written into.
    let other = tmp.path().join("other");
    fs::create_dir(&other).unwrap();
    fs::write(other.join("keep.txt"), "x").unwrap();
    let run = n2g(&[
        "build",
        "--synthetic",
        s(&spec),
        "--out",
        s(&other),
        "--overwrite",
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(fs::read_to_string(other.join("keep.txt")).unwrap(), "x");
}

#[test]
fn eval_on_oracle_complete_corpus() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    ok(&n2g(&[
        "generate",
        "--kind",
        "exact",
        "--count",
        "6",
        "--layers",
        "2",
        "--out",
        s(&spec),
    ]));
    let corpus = tmp.path().join("corpus");
    ok(&n2g(&[
        "build",
        "--synthetic",
        s(&spec),
        "--out",
        s(&corpus),
    ]));
    let out = tmp.path().join("eval");
    ok(&n2g(&[
        "eval",
        "--corpus",
        s(&corpus),
        "--synthetic",
        s(&spec),
        "--out",
        s(&out),
    ]));

    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("layer,neuron,method,precision,recall,f1,tp,fp,fn,undefined_flags")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 18);
    for r in rows.iter().filter(|r| r[2] == "n2g") {
        assert_eq!(&r[3..6], ["1", "1", "1"]);
        assert_eq!(r[9], "");
    }

    let summary: Vec<Value> =
        serde_json::from_str(&fs::read_to_string(out.join("layer_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.len(), 6);
    let groups: std::collections::BTreeSet<(u64, String)> = summary
        .iter()
        .map(|o| {
            (
                o["layer"].as_u64().unwrap(),
                o["method"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    assert_eq!(groups.len(), 6);
    for o in summary.iter().filter(|o| o["method"] == "n2g") {
        assert_eq!(
            (
                o["precision"].as_f64(),
                o["recall"].as_f64(),
                o["f1"].as_f64()
            ),
            (Some(1.0), Some(1.0), Some(1.0))
        );
    }
}

#[test]
fn eval_skips_neurons_without_graphs() {
    let tmp = TempDir::new().unwrap();
    let corpus = s1_corpus(tmp.path(), &[7]);
    let mut other = s1_entry(9);
    other["examples"] = json!([["A", "B"], ["x", "A", "B"], ["A", "B", "y"]]);
    let spec = write_spec(tmp.path(), vec![s1_entry(7), other]);
    let out = tmp.path().join("eval");
    ok(&n2g(&[
        "eval",
        "--corpus",
        s(&corpus),
        "--synthetic",
        s(&spec),
        "--out",
        s(&out),
    ]));
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("0,7,")));
}

#[test]
fn search_finds_s1() {
    let tmp = TempDir::new().unwrap();
    let corpus = s1_corpus(tmp.path(), &[7]);
    let out = ok(&n2g(&[
        "search",
        "--corpus",
        s(&corpus),
        "--activating",
        "B",
        "--context",
        "A",
    ]));
    assert_eq!(out, "0:7\n");
    let out = ok(&n2g(&["search", "--corpus", s(&corpus), "--context", "Z"]));
    assert_eq!(out, "");
}

#[test]
fn simulate_predicts_per_token() {
    let tmp = TempDir::new().unwrap();
    let corpus = s1_corpus(tmp.path(), &[7]);
    let out = n2g_stdin(
        &["simulate", "--corpus", s(&corpus), "--neuron", "0:7"],
        "{\"tokens\":[\"A\",\"B\"]}\n\n{\"tokens\":[\"B\"]}\n",
    );
    assert_eq!(ok(&out), "[0.0,1.0]\n[0.0]\n");
}

#[test]
fn similar_finds_the_duplicate() {
    let tmp = TempDir::new().unwrap();
    let corpus = s1_corpus(tmp.path(), &[7, 8]);
    let out = ok(&n2g(&[
        "similar",
        "--corpus",
        s(&corpus),
        "--threshold",
        "0.9",
    ]));
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("0:7 0:8 "), "{out}");
}

#[test]
fn export_writes_dot() {
    let tmp = TempDir::new().unwrap();
    let corpus = s1_corpus(tmp.path(), &[7]);
    let file = tmp.path().join("g.dot");
    ok(&n2g(&[
        "export",
        "--corpus",
        s(&corpus),
        "--neuron",
        "0:7",
        "--out",
        s(&file),
    ]));
    let dot = fs::read_to_string(&file).unwrap();
    assert!(dot.starts_with("digraph \"neuron_0_7\" {"));
    assert!(dot.contains("label=\"A\""));
    let plain = ok(&n2g(&[
        "export",
        "--corpus",
        s(&corpus),
        "--neuron",
        "0:7",
        "--no-end-markers",
    ]));
    assert!(!plain.contains("bold"));
}

#[test]
fn trajectory_csv() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), vec![s1_entry(7)]);
    let out = ok(&n2g(&[
        "trajectory",
        "--synthetic",
        s(&spec),
        "--neuron",
        "0:7",
        "--limit",
        "1",
    ]));
    // Record ["x", "A", "B"]: the context token is one position back.
    assert_eq!(
        out,
        "record,distance,activation_ratio,importance\n0,0,0,1\n0,1,1,1\n0,2,1,0\n"
    );
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let corpus = s1_corpus(tmp.path(), &[7]);
    let missing = tmp.path().join("missing.jsonl");
    let cases: Vec<Vec<&str>> = vec![
        vec!["search", "--corpus", s(&corpus)],
        vec!["build", "--activations", s(&missing), "--out", "unused"],
        vec!["simulate", "--corpus", s(&corpus), "--neuron", "seven"],
        vec!["simulate", "--corpus", s(&corpus), "--neuron", "3:3"],
        vec!["search", "--corpus", s(&missing), "--activating", "B"],
        vec![
            "build",
            "--synthetic",
            s(&missing),
            "--out",
            "unused",
            "--prune-ratio",
            "0",
        ],
        vec!["frobnicate"],
    ];
    for args in cases {
        let run = n2g(&args);
        assert_eq!(
            run.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&run.stderr)
        );
    }
    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{\"tokens\": 3}\n").unwrap();
    let run = n2g(&[
        "simulate",
        "--corpus",
        s(&corpus),
        "--neuron",
        "0:7",
        "--input",
        s(&bad),
    ]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn unreachable_sidecar_exits_3() {
    let tmp = TempDir::new().unwrap();
    let dump = tmp.path().join("dump.jsonl");
    fs::write(
        &dump,
        "{\"layer\":0,\"neuron\":1,\"tokens\":[\"a\",\"b\"],\"activations\":[0.0,1.0]}\n",
    )
    .unwrap();
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}");
    let out = tmp.path().join("corpus");
    let run = n2g(&[
        "build",
        "--activations",
        s(&dump),
        "--sidecar",
        &url,
        "--out",
        s(&out),
    ]);
    assert_eq!(
        run.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(!out.exists());
    let run = n2g(&[
        "dump",
        "--sidecar",
        &url,
        "--neuron",
        "0:1",
        "--out",
        "top.jsonl",
    ]);
    assert_eq!(run.status.code(), Some(3));
}
