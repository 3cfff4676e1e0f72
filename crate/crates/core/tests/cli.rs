#![cfg(feature = "cli")]

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldp-icl")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// A small two-class corpus: train as CSV, validation as JSONL.
fn write_corpus(dir: &Path) {
    let text = |i: usize, pos: bool| {
        let cue = if pos { ["bright", "warm", "lively"] } else { ["grim", "cold", "dreary"] };
        format!("{} {} filler{}", cue[i % 3], cue[(i + 1) % 3], i % 7)
    };
    let mut train = csv::Writer::from_path(dir.join("train.csv")).unwrap();
    train.write_record(["sentence", "sentiment"]).unwrap();
    for i in 0..80 {
        let pos = i % 2 == 0;
        train.write_record([text(i, pos), if pos { "pos" } else { "neg" }.to_string()]).unwrap();
    }
    train.flush().unwrap();
    let val: String = (0..30)
        .map(|i| {
            let pos = i % 3 == 0;
            serde_json::json!({"sentence": text(i + 100, pos), "sentiment": if pos { "pos" } else { "neg" }}).to_string() + "\n"
        })
        .collect();
    std::fs::write(dir.join("val.jsonl"), val).unwrap();
    std::fs::write(
        dir.join("template.toml"),
        "input_prefix = \"Review: \"\noutput_prefix = \"Sentiment: \"\n[labels]\nneg = \"negative\"\npos = \"positive\"\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("config.toml"),
        r#"
task = "toy"
epsilons = [0, 1, "inf"]
n = 8
test_size = 20
runs = 2
parallelism = 1
[data]
source = "files"
train = "train.csv"
validation = "val.jsonl"
labels = ["neg", "pos"]
text_field = "sentence"
label_field = "sentiment"
template = "template.toml"
[backend]
kind = "mock"
dim = 64
"#,
    )
    .unwrap();
}

#[test]
fn sweep_on_file_data() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let out_dir = dir.path().join("out");
    let config = dir.path().join("config.toml");
    stdout(&run(&["sweep", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]));

    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    // 3 budgets + 3 baselines, 2 runs each, plus the header.
    assert_eq!(results.lines().count(), 1 + 6 * 2);
    assert!(results.lines().skip(1).all(|l| l.contains(",20,")));
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["task"], "toy");
    assert!(Path::new(saved["data"]["train"].as_str().unwrap()).is_absolute());
    assert!(out_dir.join("summary.json").exists());
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let out_dir = dir.path().join("out");
    let config = dir.path().join("config.toml");
    stdout(&run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--epsilon",
        "0.5,inf",
        "--runs",
        "3",
        "--n",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 5 * 3);
    assert!(results.lines().skip(1).all(|l| l.split(',').nth(2) == Some("4")));
}

#[test]
fn perturb_labels_to_csv() {
    let text = stdout(&run(&["perturb", "--labels", "positive,negative,positive", "--epsilon", "0,inf", "--seed", "3"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,index,label,perturbed");
    assert_eq!(lines.len(), 1 + 2 * 3);
    // An infinite budget is the identity.
    for l in lines.iter().filter(|l| l.starts_with("inf,")) {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[2], f[3]);
    }
    assert_eq!(text, stdout(&run(&["perturb", "--labels", "positive,negative,positive", "--epsilon", "0,inf", "--seed", "3"])));
}

#[test]
fn perturb_rejects_unknown_label() {
    let out = run(&["perturb", "--labels", "maybe"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("maybe"));
}

#[test]
fn classify_prints_json_lines() {
    let text = stdout(&run(&["classify", "--query", "kpos1 kpos2 w3", "--query", "kneg0 w9", "--epsilon", "inf", "--n", "8"]));
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    for r in &records {
        let p = r["probability"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(r["label"], if p > 0.5 { "positive" } else { "negative" });
    }
}

#[test]
fn remote_needs_a_remote_table() {
    let out = run(&["sweep", "--backend", "remote"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind = \"remote\""));
}

#[test]
fn estimate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("est");
    stdout(&run(&["estimate", "--epsilon", "1,inf", "--r", "20", "--seeds", "2", "--n", "8", "--out", out_dir.to_str().unwrap()]));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    // 2 budgets, 2 methods, 2 seeds.
    assert_eq!(results.lines().count(), 1 + 8);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}
