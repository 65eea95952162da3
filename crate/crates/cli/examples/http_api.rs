//! Starts the HTTP API on an ephemeral loopback port in offline mode and
//! walks through upload, sessions, query and report.
//!
//! cargo run -p capsight-cli --example http_api

use std::sync::Arc;

use capsight_cli::server;
use capsight_cli::service::{Service, ServiceConfig};
use serde_json::{json, Value};

fn multipart(filename: &str, bytes: &[u8]) -> (String, Vec<u8>) {
    let boundary = "capsightexampleboundary";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{filename}\"\r\nContent-Type: application/vnd.tcpdump.pcap\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = tempfile::tempdir()?;
    let svc = Arc::new(Service::open(ServiceConfig::offline(data.path()))?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let handle = rt.spawn(server::serve(listener, svc, server::DEFAULT_MAX_UPLOAD, async {
        let _ = stopped.await;
    }));

    let health: Value = ureq::get(&format!("{base}/healthz")).call()?.into_json()?;
    println!("GET /healthz -> {health}");

    let pcap = std::fs::read(capsight::pipeline::default_fixture_dir().join("iot_mixed.pcap"))?;
    let (ctype, body) = multipart("iot_mixed.pcap", &pcap);
    let up: Value = ureq::post(&format!("{base}/captures"))
        .set("Content-Type", &ctype)
        .send_bytes(&body)?
        .into_json()?;
    println!("POST /captures -> {up}");
    let id = up["session_id"].as_str().unwrap_or_default().to_string();

    let sessions: Value = ureq::get(&format!("{base}/sessions")).call()?.into_json()?;
    println!("GET /sessions -> {sessions}");

    for (question, mode) in [
        ("Which source performed the DDoS_TCP attack?", "hybrid"),
        ("What is the AbuseIPDB confidence for 52.0.0.1?", "dense"),
    ] {
        let resp: Value = ureq::post(&format!("{base}/sessions/{id}/query"))
            .send_json(json!({"question": question, "mode": mode}))?
            .into_json()?;
        let a = &resp["answer"];
        println!(
            "POST /sessions/{id}/query ({mode}) -> {} with {} cited chunks, {} evidence items\n{}",
            a["source_class"],
            a["cited_chunk_ids"].as_array().map_or(0, Vec::len),
            resp["evidence"]["ranked"].as_array().map_or(0, Vec::len),
            a["text"].as_str().unwrap_or_default()
        );
    }

    let report = ureq::get(&format!("{base}/sessions/{id}/report")).call()?.into_string()?;
    println!("GET /sessions/{id}/report -> {} lines", report.lines().count());

    match ureq::get(&format!("{base}/sessions/nope/report")).call() {
        Err(ureq::Error::Status(code, r)) => println!("GET /sessions/nope/report -> {code} {}", r.into_string()?),
        other => println!("unexpected: {other:?}"),
    }

    let _ = stop.send(());
    rt.block_on(handle)??;
    Ok(())
}
