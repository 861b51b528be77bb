use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use autofeedback::fixtures::{classification_corpus, fixture_document};
use autofeedback::request_codec::serialize_request;
use autofeedback::static_scanner::ErrorType;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_autofeedback"));
    c.env_remove("AUTOFEEDBACK_LLM_KEY");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixtures(dir: &Path) -> PathBuf {
    let out = dir.join("fx");
    let o = run(&["fixtures", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

fn write_script(dir: &Path, replies: &[&str]) -> PathBuf {
    let p = dir.join("script.json");
    std::fs::write(&p, serde_json::to_string(replies).unwrap()).unwrap();
    p
}

const GOOD: &str = r#"<<API>>get_weather(city="paris", days=3)<</API>>"#;

#[test]
fn run_happy_path_exits_zero_and_writes_a_log() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures(tmp.path());
    let script = write_script(tmp.path(), &[GOOD]);
    let logs = tmp.path().join("logs");
    let o = run(&[
        "run", "-i", "What is the weather in paris for 3 days?",
        "--ground-truth", r#"get_weather(city="paris", days=3)"#,
        "--doc", s(&fx.join("doc.json")), "--script", s(&script), "--log-dir", s(&logs), "--task-id", "w1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("satisfied: true"));
    let log = std::fs::read_to_string(logs.join("w1.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(last["phase"], "final");
    assert_eq!(last["satisfied"], true);
}

#[test]
fn missing_doc_exits_two_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let script = write_script(tmp.path(), &[GOOD]);
    let missing = tmp.path().join("nowhere").join("doc.json");
    let o = run(&["run", "-i", "x", "--doc", s(&missing), "--script", s(&script)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn never_correct_model_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures(tmp.path());
    let script = write_script(tmp.path(), &["I cannot do that."]);
    let o = run(&["run", "-i", "weather in paris", "--doc", s(&fx.join("doc.json")), "--script", s(&script)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("llm_calls: 4"), "{}", stdout(&o));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures(tmp.path());
    let script = write_script(tmp.path(), &["no"]);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({"doc": fx.join("doc.json"), "script": script, "max-static": 0}).to_string(),
    )
    .unwrap();
    let from_file = run(&["run", "-i", "weather", "--config", s(&cfg)]);
    assert_eq!(from_file.status.code(), Some(1));
    assert!(stdout(&from_file).contains("llm_calls: 1"), "{}", stdout(&from_file));
    let flagged = run(&["run", "-i", "weather", "--config", s(&cfg), "--max-static", "2"]);
    assert!(stdout(&flagged).contains("llm_calls: 3"), "{}", stdout(&flagged));

    std::fs::write(&cfg, r#"{"max_statik": 1}"#).unwrap();
    let bad = run(&["run", "-i", "weather", "--config", s(&cfg)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("max_statik"), "{}", stderr(&bad));
}

#[test]
fn http_model_without_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures(tmp.path());
    let o = run(&[
        "run", "-i", "x", "--doc", s(&fx.join("doc.json")), "--llm", "http",
        "--llm-base-url", "http://127.0.0.1:9", "--model", "m",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("AUTOFEEDBACK_LLM_KEY"), "{}", stderr(&o));
}

#[test]
fn invalid_threshold_is_rejected() {
    let o = run(&["run", "-i", "x", "--threshold", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("threshold"));
}

#[test]
fn bench_reports_the_malformed_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures(tmp.path());
    let text = std::fs::read_to_string(fx.join("dataset.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{\"id\": \"broken\",";
    let ds = tmp.path().join("bad.jsonl");
    std::fs::write(&ds, lines.join("\n")).unwrap();
    let o = run(&[
        "bench", "--dataset", s(&ds), "--doc", s(&fx.join("doc.json")), "--script", s(&fx.join("script.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn bench_writes_report_and_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures(tmp.path());
    let logs = tmp.path().join("logs");
    let o = run(&[
        "bench", "--dataset", s(&fx.join("dataset.jsonl")), "--doc", s(&fx.join("doc.json")),
        "--script", s(&fx.join("script.json")), "--mock-rules", s(&fx.join("rules.json")),
        "--log-dir", s(&logs), "--jobs", "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(logs.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_tasks"], 10);
    assert_eq!(report["accuracy_pct"], 90.0);
    let n_logs = std::fs::read_dir(&logs).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "jsonl")
    }).count();
    assert_eq!(n_logs, 10);

    let rep = run(&["report", "--log-dir", s(&logs)]);
    assert_eq!(rep.status.code(), Some(0));
    let out = stdout(&rep);
    let headers: Vec<&str> = out.lines().filter(|l| !l.starts_with(' ')).collect();
    assert_eq!(headers[0], "task-09 [UNSATISFIED]", "{out}");
    assert!(headers[1..].iter().all(|h| h.ends_with("[satisfied]")));
    assert!(out.contains("Longitude precedes latitude"));
}

#[test]
fn report_handles_empty_and_corrupted_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["report", "--log-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("no sessions in"));

    let good = r#"{"task_id":"a","phase":"final","satisfied":true,"llm_calls":1,"final_request":"f()","ts":"t"}"#;
    let bad_final = r#"{"task_id":"b","phase":"final","satisfied":false,"llm_calls":2,"final_request":null,"ts":"t"}"#;
    std::fs::write(tmp.path().join("a.jsonl"), format!("{good}\n{{not json\n")).unwrap();
    std::fs::write(tmp.path().join("b.jsonl"), format!("{bad_final}\n")).unwrap();
    let o = run(&["report", "--log-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("a.jsonl:2"), "{}", stderr(&o));
    let headers: Vec<String> = stdout(&o).lines().filter(|l| !l.starts_with(' ')).map(String::from).collect();
    assert_eq!(headers, ["b [UNSATISFIED]", "a [satisfied]"]);
}

#[test]
fn classify_counts_match_the_injected_faults() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures(tmp.path());
    let doc = fixture_document();
    let corpus: Vec<_> = classification_corpus(&doc, 6, 11)
        .into_iter()
        .filter(|c| !c.faults.iter().any(|f| f.is_semantic()))
        .collect();
    let mut text = String::new();
    let mut expect = std::collections::BTreeMap::<ErrorType, u64>::new();
    for c in &corpus {
        *expect.entry(c.nominal_class()).or_default() += 1;
        let line = serde_json::json!({
            "id": c.id, "instruction": c.instruction,
            "ground_truth": serialize_request(&c.truth), "output": c.output,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    let ds = tmp.path().join("corpus.jsonl");
    std::fs::write(&ds, text).unwrap();
    let report = tmp.path().join("hist.json");
    let o = run(&["classify", "--dataset", s(&ds), "--doc", s(&fx.join("doc.json")), "--report", s(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["total"], corpus.len());
    for (class, n) in &expect {
        assert_eq!(v["counts"][class.as_str()], *n, "{class}");
    }

    let no_truth = tmp.path().join("nt.jsonl");
    std::fs::write(&no_truth, "{\"id\":\"x\",\"instruction\":\"weather\",\"output\":\"hi\"}\n").unwrap();
    let o = run(&["classify", "--dataset", s(&no_truth), "--doc", s(&fx.join("doc.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ground_truth"));
}
