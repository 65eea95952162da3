//! Dense versus hybrid benchmark over the bundled QA set, fully offline.
//!
//! cargo run --release --example benchmark

use capsight::agent::AgentConfig;
use capsight::corpus::{CorpusIndex, HashingEmbedder};
use capsight::eval::{load_qa_set, run_benchmark, AgentResponder};
use capsight::pipeline::{default_fixture_dir, ingest_capture, open_session, Clients};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = default_fixture_dir();
    let clients = Clients::offline(&fixtures);
    let dir = tempfile::tempdir()?;
    let index = CorpusIndex::open(dir.path())?;
    let (_, outcome) = ingest_capture(fixtures.join("iot_mixed.pcap"), &index, &clients, true)?;
    let retriever = open_session(&index, Some(&outcome.session_id))?;
    let cfg = AgentConfig::default();
    let responder = AgentResponder::new().with_session("iot_mixed", retriever, &clients, &cfg);
    let qa = load_qa_set(fixtures.join("qa").join("iot_mixed.jsonl"))?;
    let report = run_benchmark(&qa, &responder, &HashingEmbedder::default(), "fixture", None)?;
    print!("{}", report.to_markdown());
    if std::env::args().any(|a| a == "--rows") {
        print!("{}", report.rows_csv());
    }
    Ok(())
}
