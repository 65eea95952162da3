//! Asks the agent questions about a capture and prints each answer with
//! its source class, citations and tool trace.
//!
//! cargo run --example ask -- "Which source performed the DDoS_TCP attack?"

use std::sync::Arc;

use capsight::agent::{AgentConfig, AuditLog};
use capsight::corpus::CorpusIndex;
use capsight::pipeline::{default_fixture_dir, ingest_capture, open_session, Clients};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut questions: Vec<String> = std::env::args().skip(1).collect();
    if questions.is_empty() {
        questions = vec![
            "Which source performed the DDoS_TCP attack?".into(),
            "What is the latest Mosquitto release?".into(),
            "What firmware does 192.168.77.7 run?".into(),
        ];
    }
    let fixtures = default_fixture_dir();
    let clients = Clients::offline(&fixtures);
    let dir = tempfile::tempdir()?;
    let index = CorpusIndex::open(dir.path())?;
    ingest_capture(fixtures.join("iot_mixed.pcap"), &index, &clients, false)?;
    let audit = Arc::new(AuditLog::in_memory());
    let agent = clients
        .agent(open_session(&index, None)?, AgentConfig::default())
        .with_audit(audit.clone());
    for q in &questions {
        let rec = agent.answer(q);
        println!("Q: {q}\n[{:?}, {} step(s)]\n{}", rec.source_class, rec.steps_used, rec.text);
        for id in &rec.cited_chunk_ids {
            println!("  cites {id}");
        }
        for w in &rec.web_citations {
            println!("  web {}", w.url);
        }
        println!();
    }
    for e in audit.entries() {
        println!("step {} {:<16} {}", e.step, e.tool, e.outcome);
    }
    Ok(())
}
