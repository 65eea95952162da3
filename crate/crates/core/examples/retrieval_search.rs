//! Ingests a capture into a temporary session store and shows the dense,
//! BM25 and fused hybrid rankings for one query.
//!
//! cargo run --example retrieval_search -- "flows from 45.33.32.156"

use capsight::corpus::{CorpusIndex, HashingEmbedder};
use capsight::pipeline::{default_fixture_dir, ingest_capture, open_session, Clients};
use capsight::retrieval::RetrievalConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "flows from 45.33.32.156".into());
    let fixtures = default_fixture_dir();
    let clients = Clients::offline(&fixtures);
    let dir = tempfile::tempdir()?;
    let index = CorpusIndex::open(dir.path())?;
    let (_, outcome) = ingest_capture(fixtures.join("iot_mixed.pcap"), &index, &clients, false)?;
    let r = open_session(&index, Some(&outcome.session_id))?;
    println!("session {} with {} chunks", outcome.session_id, r.store().len());

    let e = HashingEmbedder::default();
    let first_line = |i: usize| r.store().chunks[i].text.lines().next().unwrap_or("").to_string();
    println!("\ndense:");
    for c in r.dense_search(&query, 5, &e)? {
        println!("  {:.3}  {}", c.dense_score.unwrap_or(0.0), first_line(c.index));
    }
    println!("\nbm25:");
    for c in r.bm25_search(&query, 5)? {
        println!("  {:.3}  {}", c.sparse_score.unwrap_or(0.0), first_line(c.index));
    }
    let cfg = RetrievalConfig {
        top_k: 5,
        ..RetrievalConfig::default()
    };
    let bundle = r.retrieve(&query, &cfg, &e, None)?;
    println!("\nhybrid (fused, reranked):");
    for ev in &bundle.ranked {
        println!(
            "  #{} {:.3}  [{:?}] {}",
            ev.rank,
            ev.candidate.final_score(),
            ev.chunk.modality,
            ev.chunk.text.lines().next().unwrap_or("")
        );
    }
    Ok(())
}
