use std::collections::BTreeSet;

use capsight::corpus::*;
use capsight::features::ReportSection;

fn artifacts(tag: &str) -> Artifacts {
    Artifacts {
        protocol_logs: format!(
            "{{\"_path\":\"conn\",\"uid\":\"C{tag}\",\"ts\":1.000000,\"id.orig_h\":\"10.0.0.5\",\"id.orig_p\":40000,\"id.resp_h\":\"10.0.0.9\",\"id.resp_p\":80,\"proto\":\"tcp\"}}\n"
        ),
        report: format!("== Global Summary ==\nTotal rows: 3 {tag}\n\n== Normal ==\nbenign\n"),
        flow_summary: format!("Global summary: 1 flows {tag}\n\nFlow C{tag}: 10.0.0.5:40000 <-> 10.0.0.9:80 (TCP)\n\n"),
        packets: format!("{{\"frame_no\":1,\"tag\":\"{tag}\"}}\n{{\"frame_no\":2,\"tag\":\"{tag}\"}}\n"),
    }
}

struct Failing;

impl Embedder for Failing {
    fn dims(&self) -> usize {
        256
    }
    fn id(&self) -> String {
        "failing".into()
    }
    fn embed(&self, _: &str) -> Result<Vec<f32>, EmbedError> {
        Err(EmbedError::EmbedderUnavailable("down".into()))
    }
}

#[test]
fn lru_keeps_three_most_recent() {
    let dir = tempfile::tempdir().unwrap();
    let idx = CorpusIndex::open(dir.path()).unwrap();
    let e = HashingEmbedder::default();
    let ids: Vec<String> = ["a", "b", "c", "d"]
        .iter()
        .map(|t| idx.ingest(&artifacts(t), &e, SemanticConfig::default()).unwrap().session_id)
        .collect();
    let kept: BTreeSet<String> = idx.sessions().unwrap().into_iter().map(|s| s.session_id).collect();
    assert_eq!(kept, ids[1..].iter().cloned().collect());
    let on_disk: BTreeSet<String> = idx.session_dirs().unwrap().into_iter().collect();
    assert_eq!(on_disk, kept);
    assert_eq!(idx.latest().unwrap().as_deref(), Some(ids[3].as_str()));
}

#[test]
fn reingest_is_free_and_repoints_latest() {
    let dir = tempfile::tempdir().unwrap();
    let idx = CorpusIndex::open(dir.path()).unwrap();
    let e = CountingEmbedder::new(HashingEmbedder::default());
    let a = idx.ingest(&artifacts("a"), &e, SemanticConfig::default()).unwrap();
    let b = idx.ingest(&artifacts("b"), &e, SemanticConfig::default()).unwrap();
    assert_eq!(idx.latest().unwrap(), Some(b.session_id.clone()));
    e.reset();
    let again = idx.ingest(&artifacts("a"), &e, SemanticConfig::default()).unwrap();
    assert!(again.reused);
    assert_eq!(e.calls(), 0);
    assert_eq!(again.session_id, a.session_id);
    assert_eq!(idx.latest().unwrap(), Some(a.session_id.clone()));
    assert_eq!(idx.sessions().unwrap().len(), 2);

    // Retouching A refreshes its recency: C and D now evict B first.
    idx.ingest(&artifacts("c"), &e, SemanticConfig::default()).unwrap();
    idx.ingest(&artifacts("d"), &e, SemanticConfig::default()).unwrap();
    let kept: Vec<String> = idx.sessions().unwrap().into_iter().map(|s| s.session_id).collect();
    assert!(kept.contains(&a.session_id));
    assert!(!kept.contains(&b.session_id));
}

#[test]
fn failed_ingest_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let idx = CorpusIndex::open(dir.path()).unwrap();
    idx.ingest(&artifacts("a"), &HashingEmbedder::default(), SemanticConfig::default())
        .unwrap();
    let before = std::fs::read(dir.path().join("index.json")).unwrap();
    let dirs_before = idx.session_dirs().unwrap();
    let err = idx.ingest(&artifacts("b"), &Failing, SemanticConfig::default()).unwrap_err();
    assert!(matches!(err, capsight::Error::Embed(EmbedError::EmbedderUnavailable(_))));
    assert_eq!(std::fs::read(dir.path().join("index.json")).unwrap(), before);
    assert_eq!(idx.session_dirs().unwrap(), dirs_before);
    let all: Vec<_> = std::fs::read_dir(dir.path().join("sessions")).unwrap().collect();
    assert_eq!(all.len(), 1);
}

#[test]
fn stored_vectors_are_unit_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let idx = CorpusIndex::open(dir.path()).unwrap();
    let out = idx
        .ingest(&artifacts("a"), &HashingEmbedder::default(), SemanticConfig::default())
        .unwrap();
    let store = idx.load(&out.session_id).unwrap();
    assert_eq!(store.manifest.schema_version, 1);
    assert_eq!(store.len(), out.chunk_count);
    assert_eq!(store.manifest.input_hashes.len(), 4);
    for i in 0..store.len() {
        let v = store.vector(i);
        assert_eq!(v.len(), 256);
        assert!((dot(v, v) - 1.0).abs() < 1e-6);
    }
    let bytes = std::fs::read(store.directory.join("vectors.bin")).unwrap();
    assert_eq!(bytes.len(), store.len() * 256 * 4);
    let modalities: BTreeSet<Modality> = store.chunks.iter().map(|c| c.modality).collect();
    assert_eq!(modalities.len(), 4);
}

#[test]
fn duplicate_chunks_store_one_vector() {
    let mut a = artifacts("a");
    a.flow_summary = "Global summary\n\nFlow X: same\n\nFlow X: same\n\n".into();
    let chunks = a.chunk(&HashingEmbedder::default(), SemanticConfig::default()).unwrap();
    let flows = chunks.iter().filter(|c| c.modality == Modality::FlowSummary).count();
    assert_eq!(flows, 2);
}

#[test]
fn report_section_counts() {
    let sec = |t: &str| ReportSection {
        title: t.into(),
        body: format!("{t} body\n"),
    };
    assert_eq!(chunk_report(&[sec("Global Summary"), sec("Normal")]).len(), 2);
    let five = [
        sec("Global Summary"),
        sec("DDoS_TCP"),
        sec("Metadata: DDoS_TCP"),
        sec("Backdoor"),
        sec("Metadata: Backdoor"),
    ];
    let a = chunk_report(&five);
    assert_eq!(a.len(), 5);
    let ids = |c: &[Chunk]| c.iter().map(|c| c.chunk_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&a), ids(&chunk_report(&five)));
}

#[test]
fn uid_grouping_is_time_ordered() {
    let line = |uid: &str, ts: &str, path: &str| {
        format!("{{\"_path\":\"{path}\",\"uid\":\"{uid}\",\"ts\":{ts},\"id.orig_h\":\"10.0.0.5\",\"id.orig_p\":1,\"id.resp_h\":\"10.0.0.53\",\"id.resp_p\":53,\"proto\":\"udp\"}}")
    };
    let text = [
        line("U2", "3.000000", "dns"),
        line("U1", "1.000000", "conn"),
        line("U2", "2.000000", "conn"),
        line("U1", "4.000000", "dns"),
    ]
    .join("\n");
    let (chunks, bad) = chunk_protocol_log_text(&text);
    assert_eq!(bad, 0);
    assert_eq!(chunks.len(), 2);
    assert_eq!(chunks[0].source_uid.as_deref(), Some("U1"));
    for c in &chunks {
        let ts: Vec<&str> = c.text.lines().map(|l| l.split("\"ts\":").nth(1).unwrap()).collect();
        let mut sorted = ts.clone();
        sorted.sort();
        assert_eq!(ts, sorted);
        assert_eq!(c.text.lines().count(), 2);
    }
}

#[test]
fn semantic_split_lands_on_modality_boundary() {
    let dns: Vec<String> = (0..5)
        .map(|i| format!("{{\"frame_no\":{},\"transport\":\"udp\",\"dst_port\":53,\"app\":{{\"kind\":\"DNS\",\"qname\":\"broker.local\",\"qtype\":1}}}}", i + 1))
        .collect();
    let modbus: Vec<String> = (0..5)
        .map(|i| format!("{{\"frame_no\":{},\"transport\":\"tcp\",\"dst_port\":502,\"app\":{{\"kind\":\"Modbus\",\"unit\":1,\"function\":6,\"register\":40001}}}}", i + 6))
        .collect();
    let lines: Vec<&str> = dns.iter().chain(&modbus).map(String::as_str).collect();
    let e = HashingEmbedder::default();
    let vecs: Vec<Vec<f32>> = lines.iter().map(|l| e.embed(l).unwrap()).collect();
    let d: Vec<f64> = vecs.windows(2).map(|w| 1.0 - dot(&w[0], &w[1])).collect();
    let argmax = (0..d.len()).max_by(|a, b| d[*a].total_cmp(&d[*b])).unwrap();
    assert_eq!(argmax, 4);
    let chunks = chunk_packets_semantic(&lines, &e, SemanticConfig::default()).unwrap();
    assert_eq!(chunks.len(), 2);
    assert_eq!(chunks[0].text.lines().count(), 5);
    assert!(chunks[1].text.contains("Modbus"));
}

#[cfg(unix)]
#[test]
fn lock_blocks_second_writer() {
    let dir = tempfile::tempdir().unwrap();
    let idx = CorpusIndex::open(dir.path()).unwrap();
    let f = std::fs::OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(dir.path().join(".lock"))
        .unwrap();
    use std::os::unix::io::AsRawFd;
    assert_eq!(unsafe { libc_flock(f.as_raw_fd()) }, 0);
    let err = idx
        .ingest(&artifacts("a"), &HashingEmbedder::default(), SemanticConfig::default())
        .unwrap_err();
    assert!(matches!(err, capsight::Error::Locked(_)));
}

#[cfg(unix)]
extern "C" {
    fn flock(fd: i32, op: i32) -> i32;
}

#[cfg(unix)]
unsafe fn libc_flock(fd: i32) -> i32 {
    flock(fd, 2 | 4)
}
