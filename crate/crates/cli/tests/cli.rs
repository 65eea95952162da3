use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    capsight::pipeline::default_fixture_dir().join(name)
}

fn run(data: &std::path::Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capsight"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .env_remove("CAPSIGHT_OFFLINE")
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn capsight")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn ingest_then_query_offline() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = fixture("handshake.pcap");
    let o = run(dir.path(), &["ingest", pcap.to_str().unwrap(), "--offline"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sid = stdout(&o).trim().to_string();
    assert!(sid.ends_with("-c939a7e1"), "{sid}");

    let o = run(dir.path(), &["query", &sid, "how many flows?", "--mode", "hybrid", "--offline"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rec["source_class"], "CaptureGrounded");
    assert!(rec["text"].as_str().unwrap().contains("1 flows"));
    assert!(!rec["cited_chunk_ids"].as_array().unwrap().is_empty());

    let o = run(dir.path(), &["--offline", "query", "latest", "how many flows?", "--mode", "dense", "--evidence"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["evidence"]["mode"], "DenseOnly");
    assert_eq!(v["evidence"]["session_id"], sid.as_str());
}

#[test]
fn reingest_prints_the_same_session() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = fixture("dns_query.pcap");
    let a = run(dir.path(), &["--offline", "ingest", pcap.to_str().unwrap()]);
    let b = run(dir.path(), &["--offline", "ingest", pcap.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    let o = run(dir.path(), &["--offline", "sessions"]);
    let idx: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(idx["entries"].as_array().unwrap().len(), 1);
}

#[test]
fn missing_session_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--offline", "query", "missing-session", "x"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("session not found"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);

    let o = run(dir.path(), &["--offline", "report", "latest"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--offline", "ingest", "/nonexistent/capture.pcap"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let junk = dir.path().join("junk.pcap");
    std::fs::write(&junk, b"definitely not a capture").unwrap();
    let o = run(dir.path(), &["--offline", "ingest", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: "));

    let o = run(dir.path(), &["--offline", "frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("--offline"));
}

#[test]
fn report_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = fixture("handshake.pcap");
    assert_eq!(run(dir.path(), &["--offline", "ingest", pcap.to_str().unwrap()]).status.code(), Some(0));
    let o = run(dir.path(), &["--offline", "report", "latest"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("== Global Summary =="));

    let qa = dir.path().join("qa.jsonl");
    std::fs::write(
        &qa,
        concat!(
            r#"{"question":"How many flows are in this capture?","reference_answer":"There is 1 flow.","source_modality":"flow_summary","pcap_id":"handshake"}"#,
            "\n",
            r#"{"question":"Which destination port was contacted?","reference_answer":"Port 80.","source_modality":"protocol_log","pcap_id":"handshake"}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("bench");
    let o = run(
        dir.path(),
        &["--offline", "bench", qa.to_str().unwrap(), "--out", out.to_str().unwrap(), "--label", "fixture"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Hybrid"));
    for f in ["table1.csv", "table2.csv", "rows.csv", "bench.md"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let t2 = std::fs::read_to_string(out.join("table2.csv")).unwrap();
    assert!(t2.contains("Avg. Response size (bytes)"));
}
