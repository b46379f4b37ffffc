use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn agqr(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_agqr"))
        .args(args)
        .env_remove("AGQR_LOG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small corpus and a one-epoch model; enough to exercise the plumbing.
fn small_model(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("data.jsonl");
    stdout(&agqr(&["synth", "--seed", "4", "--clear", "150", "--ambiguous", "150", "-o", p(&data)], ""));
    let model = dir.join("model.json");
    stdout(&agqr(&["train", "-i", p(&data), "-o", p(&model), "--epochs", "1", "--seed", "9"], ""));
    (data, model)
}

#[test]
fn mask_reads_stdin() {
    let out = agqr(&["mask"], "What is the total size of 124abcde?\nList all segments\n");
    assert_eq!(stdout(&out), "What is the total size of ENTITY?\nList all segments\n");
}

#[test]
fn mask_json_reports_spans() {
    let out = stdout(&agqr(&["mask", "--json"], "Open dataset seg_01\n"));
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["text"], "Open dataset ENTITY");
    assert_eq!(v["spans"][0]["original"], "seg_01");
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = agqr(&["classify"], "What is it?\n");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));

    let out = agqr(&["frobnicate"], "");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("usage"));
}

#[test]
fn runtime_errors_are_one_json_line() {
    let out = agqr(&["eval", "--checkpoint", "/nonexistent/model.json"], "");
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "io");

    let out = agqr(&["augment"], "{\"id\":\"a\",\"query\":\"x\",\"label\":\"sort of\"}\n");
    let v: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "input");
    assert!(v["message"].as_str().unwrap().contains("line 1"));
}

#[test]
fn training_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = small_model(dir.path());
    let again = dir.path().join("again.json");
    stdout(&agqr(&["train", "-i", p(&data), "-o", p(&again), "--epochs", "1", "--seed", "9"], ""));
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());

    // stdin/stdout form produces the same bytes
    let piped = agqr(&["train", "--epochs", "1", "--seed", "9"], &std::fs::read_to_string(&data).unwrap());
    assert!(piped.status.success());
    assert_eq!(piped.stdout, std::fs::read(&model).unwrap());
}

#[test]
fn classify_eval_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = small_model(dir.path());

    let out = stdout(&agqr(
        &["classify", "--checkpoint", p(&model)],
        "What is the total size of 124abcde?\n\n{\"query\": \"List all segments owned by Maria\"}\n",
    ));
    let lines: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["label"], "ambiguous");
    assert_eq!(lines[0]["masked"], "What is the total size of ENTITY?");
    assert_eq!(lines[1]["query"], "List all segments owned by Maria");

    let report: Value =
        serde_json::from_str(stdout(&agqr(&["eval", "--checkpoint", p(&model), "-i", p(&data)], "")).trim()).unwrap();
    assert_eq!(report["tp"].as_u64().unwrap() + report["fp"].as_u64().unwrap()
        + report["tn"].as_u64().unwrap() + report["fn"].as_u64().unwrap(), 300);

    let json_report = dir.path().join("cmp.json");
    let table = stdout(&agqr(&["compare", "--checkpoint", p(&model), "-i", p(&data), "--report", p(&json_report)], ""));
    for mode in ["no_rewrite", "always_rewrite", "guided"] {
        assert!(table.contains(mode), "{table}");
    }
    let reports: Vec<Value> = serde_json::from_slice(&std::fs::read(&json_report).unwrap()).unwrap();
    assert_eq!(reports.len(), 3);
    assert!(reports.iter().all(|r| r["n"] == 300));
}

#[test]
fn augment_writes_dataset_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = "{\"id\":\"q1\",\"query\":\"What is the name of my largest dataset?\",\"label\":\"clear\"}\n\
                 {\"id\":\"q2\",\"query\":\"What is it?\",\"label\":\"ambiguous\"}\n";
    let out = dir.path().join("aug.jsonl");
    stdout(&agqr(&["augment", "-o", p(&out), "--seed", "5"], input));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(input.lines().next().unwrap()));
    assert!(text.contains("\"query\":\"What is the name?\""));
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("aug.jsonl.report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["input_records"], 2);
    assert_eq!(report["summary"]["per_rule"]["omit_details"], 1);

    let again = stdout(&agqr(&["augment", "--seed", "5", "--only-generated", "--rules", "omit_details"], input));
    assert_eq!(again.lines().count(), 1);
    let out = agqr(&["augment", "--rules", "shuffle"], input);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_requires_a_checkpoint() {
    let out = agqr(&["serve"], "");
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("svc.toml");
    std::fs::write(&cfg, "checkpoint = \"m.json\"\napi_token = \"secret\"\n").unwrap();
    let out = agqr(&["serve", "--config", p(&cfg)], "");
    let v: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "config");
}
