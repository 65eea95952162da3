//! Session store lifecycle: ingest, skip on unchanged inputs, and
//! retention of the three most recent sessions.
//!
//! cargo run --example session_store

use capsight::corpus::CorpusIndex;
use capsight::pipeline::{default_fixture_dir, ingest_capture, Clients};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = default_fixture_dir();
    let clients = Clients::offline(&fixtures);
    let dir = tempfile::tempdir()?;
    let index = CorpusIndex::open(dir.path())?;
    for name in ["handshake.pcap", "dns_query.pcap", "handshake.pcap", "tls_hello.pcap", "iot_mixed.pcap"] {
        let (_, o) = ingest_capture(fixtures.join(name), &index, &clients, false)?;
        let note = if o.reused { " (unchanged, reused)" } else { "" };
        println!("{name:<16} -> {}{note}", o.session_id);
        for id in &o.evicted {
            println!("  evicted {id}");
        }
    }
    let idx = index.read_index()?;
    println!("\nretained:");
    for e in &idx.entries {
        println!("  {}  {}", e.session_id, &e.capture_hash[..16]);
    }
    println!("latest: {}", idx.latest.as_deref().unwrap_or("-"));
    Ok(())
}
