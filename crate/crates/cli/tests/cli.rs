//! End-to-end runs of the `cot-inspector` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn hubble_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/hubble")
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cot-inspector"));
    cmd.env("RUST_LOG", "warn").env_remove("LLM_API_BASE").env_remove("SEARCH_API_KEY");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().unwrap()
}

fn diagnose_hubble(store: &Path, extra: &[&str]) -> Output {
    let dir = hubble_dir();
    run(bin()
        .arg("diagnose")
        .arg("--question")
        .arg(dir.join("question.txt"))
        .arg("--trace")
        .arg(dir.join("trace.txt"))
        .arg("--fixtures")
        .arg(&dir)
        .arg("--store")
        .arg(store)
        .args(extra))
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn diagnose_replays_the_golden_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out_file = tmp.path().join("out/report.json");
    let out = diagnose_hubble(&tmp.path().join("store"), &["--out", out_file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let expected = std::fs::read_to_string(hubble_dir().join("expected_report.json")).unwrap();
    let expected_id = serde_json::from_str::<Value>(&expected).unwrap()["report_id"].as_str().unwrap().to_string();
    assert_eq!(stdout(&out).trim(), expected_id);
    assert_eq!(std::fs::read_to_string(&out_file).unwrap(), expected);
    assert!(tmp.path().join("store").join(format!("{expected_id}.json")).exists());

    let exported = tmp.path().join("exported.json");
    let out = run(bin()
        .args(["export", "--id", &expected_id, "--out"])
        .arg(&exported)
        .arg("--store")
        .arg(tmp.path().join("store")));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&exported).unwrap(), expected);
}

#[test]
fn stage_timings_are_logged() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = hubble_dir();
    let out = run(bin()
        .env("RUST_LOG", "info")
        .arg("diagnose")
        .arg("--question")
        .arg(dir.join("question.txt"))
        .arg("--trace")
        .arg(dir.join("trace.txt"))
        .arg("--fixtures")
        .arg(&dir)
        .arg("--store")
        .arg(tmp.path()));
    let log = String::from_utf8_lossy(&out.stderr);
    for stage in ["segment", "classify", "premises", "fact", "logic", "summarize"] {
        assert!(log.contains(&format!("stage {stage} finished in")), "{log}");
    }
}

#[test]
fn trace_can_come_from_stdin() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = hubble_dir();
    let mut child = bin()
        .arg("diagnose")
        .arg("--question")
        .arg(dir.join("question.txt"))
        .args(["--trace", "-", "--fixtures"])
        .arg(&dir)
        .arg("--store")
        .arg(tmp.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let trace = std::fs::read(dir.join("trace.txt")).unwrap();
    child.stdin.take().unwrap().write_all(&trace).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn skipping_verification_gives_a_report_without_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out_file = tmp.path().join("r.json");
    let out = diagnose_hubble(tmp.path(), &["--skip-fact", "--skip-logic", "--out", out_file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_file).unwrap()).unwrap();
    assert_eq!(report["errors"], serde_json::json!([]));
    assert!(!report["graph"]["edges"].as_array().unwrap().is_empty());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["diagnose"],
        vec!["bogus"],
        vec!["diagnose", "--question", "-", "--trace", "-"],
        vec!["diagnose", "--question", "/nonexistent/q", "--trace", "/nonexistent/t", "--skip-fact"],
        vec!["export", "--id", "nope", "--out", "x.json"],
        vec!["eval", "--dataset", "d.jsonl", "--pred", "missing-equals", "--out", "o"],
    ];
    for args in cases {
        let out = run(bin().current_dir(tmp.path()).args(&args));
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn live_mode_without_configuration_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let q = tmp.path().join("q.txt");
    std::fs::write(&q, "Q").unwrap();
    let out = run(bin().arg("diagnose").arg("--question").arg(&q).arg("--trace").arg(&q).arg("--store").arg(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("LLM_API_BASE"));
}

#[test]
fn empty_trace_is_a_stage_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.txt");
    std::fs::write(&empty, "   \n").unwrap();
    let dir = hubble_dir();
    let out = run(bin()
        .arg("diagnose")
        .arg("--question")
        .arg(dir.join("question.txt"))
        .arg("--trace")
        .arg(&empty)
        .arg("--fixtures")
        .arg(&dir)
        .arg("--store")
        .arg(tmp.path().join("store")));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let failed: Vec<_> = std::fs::read_dir(tmp.path().join("store/failed")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].to_string_lossy().ends_with("-segment.json"));
}

#[test]
fn fixture_miss_is_a_backend_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("trace.txt");
    std::fs::write(&trace, "This trace was never recorded.").unwrap();
    let dir = hubble_dir();
    let out = run(bin()
        .arg("diagnose")
        .arg("--question")
        .arg(dir.join("question.txt"))
        .arg("--trace")
        .arg(&trace)
        .arg("--fixtures")
        .arg(&dir)
        .arg("--store")
        .arg(tmp.path().join("store")));
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let failed = std::fs::read_dir(tmp.path().join("store/failed")).unwrap().next().unwrap().unwrap().path();
    let artifact: Value = serde_json::from_str(&std::fs::read_to_string(failed).unwrap()).unwrap();
    assert_eq!(artifact["kind"], "backend");
    assert_eq!(artifact["partial"]["steps"].as_array().unwrap().len(), 1);
}

#[test]
fn eval_writes_metrics_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let sentence = |i: u32, verifiable: bool, gold: bool| {
        serde_json::json!({"index": i, "text": format!("s{i}"), "verifiable": verifiable, "gold_error": gold})
    };
    let samples = [
        serde_json::json!({"sample_id": "1", "question": "q", "sentences": [
            sentence(1, true, true), sentence(2, true, false), sentence(3, false, false), sentence(4, true, true)]}),
        serde_json::json!({"sample_id": "2", "question": "q", "sentences": [
            sentence(1, true, false), sentence(2, true, true)]}),
    ];
    let dataset = tmp.path().join("data.jsonl");
    std::fs::write(&dataset, samples.iter().map(|s| s.to_string() + "\n").collect::<String>()).unwrap();
    // a: sample 1 TP={1} FP={2} FN={4}; sample 2 TP={2}
    std::fs::write(tmp.path().join("a.json"), r#"{"1": [1, 2], "2": [2]}"#).unwrap();
    // b: predicts nothing, plus an index outside the universe that is dropped
    std::fs::write(tmp.path().join("b.json"), r#"{"1": [3]}"#).unwrap();
    let out_dir = tmp.path().join("eval");
    let out = run(bin()
        .arg("eval")
        .arg("--dataset")
        .arg(&dataset)
        .arg("--pred")
        .arg(format!("ours={}", tmp.path().join("a.json").display()))
        .arg("--pred")
        .arg(format!("none={}", tmp.path().join("b.json").display()))
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    let ours = &metrics["methods"]["ours"]["macro"];
    // per-sample P = (0.5, 1.0), R = (0.5, 1.0), F1 = (0.5, 1.0)
    assert!((ours["precision"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!((ours["recall"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!((ours["f1"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(metrics["methods"]["none"]["macro"]["precision"], 0.0);
    assert_eq!(metrics["comparisons"][0]["macro_row"]["delta_precision"], 0.75);
    let table = std::fs::read_to_string(out_dir.join("table.txt")).unwrap();
    assert!(table.starts_with("ours vs none"));
    assert_eq!(table, stdout(&out));
}
