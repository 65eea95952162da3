//! Acceptance suite. Prints one PASS/FAIL line per criterion with its
//! measured value, tolerance and runtime budget, then fails if any failed.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use capsight::agent::{
    faithfulness_check, parse_user_prompt, Agent, AgentConfig, ChatClient, ChatError, SourceClass,
};
use capsight::capture::{parse_bytes, FlowKey, TcpFlags};
use capsight::corpus::{
    Chunk, CorpusIndex, CountingEmbedder, EmbedError, Embedder, HashingEmbedder, Level, Modality, SessionStore,
};
use capsight::eval::{self, bleu, bertscore, meteor, rouge, run_benchmark, AgentResponder, ProfileReport};
use capsight::flow::{assemble_flows, decode_flag_sequence, ConnectionSignature};
use capsight::pipeline::{self, default_fixture_dir, Clients, Endpoints};
use capsight::retrieval::{Bm25Index, RetrievalConfig, Retriever};
use capsight::synth::random_capture;
use capsight::transport::{RecordingTransport, StubTransport};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name}: got {got}, want {want} ± {tol}"))
}

// ---------------------------------------------------------------------------
// Metric oracles

fn random_text(rng: &mut StdRng, vocab: &[&str]) -> String {
    let n = rng.gen_range(1..=12);
    let mut words: Vec<String> = Vec::with_capacity(n);
    for _ in 0..n {
        let w = match rng.gen_range(0..10) {
            0 => format!("10.{}.{}.{}", rng.gen_range(0..256), rng.gen_range(0..256), rng.gen_range(1..255)),
            1 => format!("port {}", rng.gen_range(1..65536)),
            _ => vocab[rng.gen_range(0..vocab.len())].to_string(),
        };
        words.push(w);
    }
    let mut s = words.join(" ");
    if rng.gen_bool(0.3) {
        s.push('.');
    }
    s
}

fn metric_oracles() -> Outcome {
    let tol = 1e-4;
    let e = HashingEmbedder::default();

    close("bleu identical", bleu("the cat sat on the mat", &["the cat sat on the mat"]).unwrap(), 100.0, tol)?;
    let hand = 100.0 * (1.0f64 - 4.0 / 3.0).exp();
    close("bleu brevity", bleu("the cat sat", &["the cat sat down"]).unwrap(), hand, tol)?;
    close("bleu brevity frozen", hand, 71.653_131, tol)?;
    let disjoint = bleu("alpha beta gamma delta", &["one two three four"]).unwrap();
    ensure(disjoint < 1.0, || format!("bleu without overlap = {disjoint}"))?;

    let r = rouge("a b c", "a c").unwrap();
    close("rouge1 a b c / a c", r.r1, 80.0, tol)?;
    close("rouge2 a b c / a c", r.r2, 0.0, tol)?;
    close("rougeL a b c / a c", r.rl, 80.0, tol)?;
    let r = rouge("the sensor rebooted", "the sensor rebooted").unwrap();
    for v in [r.r1, r.r2, r.rl] {
        close("rouge identical", v, 100.0, tol)?;
    }
    let r = rouge("alpha beta", "gamma delta").unwrap();
    for v in [r.r1, r.r2, r.rl] {
        close("rouge disjoint", v, 0.0, tol)?;
    }

    close("meteor identical 4", meteor("the gateway dropped packets", "the gateway dropped packets").unwrap(), 99.21875, tol)?;
    let al = eval::meteor_alignment(&eval::tokenize("device resets"), &eval::tokenize("device reset"));
    ensure(al.matches == 2 && al.chunks == 1, || format!("stemmed alignment {al:?}"))?;
    close("meteor stemmed", meteor("device resets", "device reset").unwrap(), 93.75, tol)?;
    close("meteor no match", meteor("alpha beta", "gamma delta").unwrap(), 0.0, tol)?;

    close("bertscore identical", bertscore("mqtt broker on port 1883", "mqtt broker on port 1883", &e).unwrap().f, 100.0, tol)?;
    let (a, b) = ("sensor", "firmware");
    let (va, vb) = (e.embed(a).unwrap(), e.embed(b).unwrap());
    let shared = va.iter().zip(&vb).any(|(x, y)| *x != 0.0 && *y != 0.0);
    ensure(!shared, || "test tokens share a hashing bucket".into())?;
    close("bertscore disjoint", bertscore(a, b, &e).unwrap().f, 0.0, tol)?;
    let sub = bertscore("sensor gateway", "sensor gateway firmware", &e).unwrap();
    close("bertscore subset P", sub.p, 100.0, tol)?;
    ensure(sub.p > sub.f, || format!("subset P {} not above F {}", sub.p, sub.f))?;

    let vocab = [
        "the", "sensor", "gateway", "sent", "mqtt", "publish", "to", "broker", "over", "tcp", "udp", "dns", "query",
        "modbus", "read", "coils", "from", "plc", "reset", "resets", "flow", "flows", "packet", "packets", "scan",
        "attack", "normal", "camera", "firmware", "device",
    ];
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for i in 0..1000 {
        let x = random_text(&mut rng, &vocab);
        let others: Vec<String> = (0..3).map(|_| random_text(&mut rng, &vocab)).collect();
        let ctx = |m: &str| format!("string {i} {x:?}: {m}");
        close(&ctx("bleu"), bleu(&x, &[&x]).unwrap(), 100.0, tol)?;
        let r = rouge(&x, &x).unwrap();
        for v in [r.r1, r.r2, r.rl] {
            close(&ctx("rouge"), v, 100.0, tol)?;
        }
        let m = eval::tokenize(&x).len() as f64;
        let own = meteor(&x, &x).unwrap();
        close(&ctx("meteor"), own, 100.0 * (1.0 - 0.5 * (1.0 / m).powi(3)), tol)?;
        close(&ctx("bert f"), bertscore(&x, &x, &e).unwrap().f, 100.0, tol)?;
        for y in &others {
            ensure(meteor(y, &x).unwrap() <= own + tol, || ctx("meteor exceeded by another candidate"))?;
            ensure(bleu(y, &[&x]).unwrap() <= 100.0 + tol, || ctx("bleu above 100"))?;
            let ry = rouge(y, &x).unwrap();
            ensure(ry.r1.max(ry.r2).max(ry.rl) <= 100.0 + tol, || ctx("rouge above 100"))?;
            ensure(bertscore(y, &x, &e).unwrap().f <= 100.0 + tol, || ctx("bert f above 100"))?;
        }
    }
    Ok("hand examples within 1e-4; identity maximal on 1000 random strings".into())
}

// ---------------------------------------------------------------------------
// BM25

fn bm25_reference(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms: Vec<&String> = Vec::new();
    for t in query {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }
    docs.iter()
        .map(|d| {
            let mut score = 0.0;
            for t in &terms {
                let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                let tf = d.iter().filter(|w| w == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg));
            }
            score
        })
        .collect()
}

fn bm25_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(25);
    let vocab: Vec<String> = (0..24).map(|i| format!("t{i}")).collect();
    let mut worst = 0.0f64;
    for corpus in 0..100 {
        let n_docs = rng.gen_range(1..=50);
        let docs: Vec<Vec<String>> = (0..n_docs)
            .map(|_| (0..rng.gen_range(1..=30)).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect())
            .collect();
        let (k1, b) = if corpus % 2 == 0 { (1.2, 0.75) } else { (rng.gen_range(0.5..2.0), rng.gen_range(0.0..1.0)) };
        let idx = Bm25Index::build(&docs, k1, b);
        for _ in 0..5 {
            let q: Vec<String> = (0..rng.gen_range(1..=6)).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect();
            let got = idx.scores(&q);
            let want = bm25_reference(&docs, &q, k1, b);
            ensure(got.len() == want.len(), || "score vector length".into())?;
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
                ensure((g - w).abs() <= 1e-9, || format!("corpus {corpus}: {g} vs {w}"))?;
            }
        }
    }
    Ok(format!("100 corpora x 5 queries, max |diff| {worst:.1e} (tol 1e-9)"))
}

// ---------------------------------------------------------------------------
// Hybrid versus dense recall@5

fn hybrid_vs_dense() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1883);
    let devices = ["thermostat", "camera", "plc", "gateway", "sensor", "hub", "meter", "lock"];
    let services = ["mqtt", "modbus", "http", "dns", "ssh", "coap"];
    let mut used_ips = HashSet::new();
    let mut used_ports = HashSet::new();
    let mut fresh_ip = |rng: &mut StdRng| loop {
        let ip = format!("10.{}.{}.{}", rng.gen_range(0..8), rng.gen_range(0..8), rng.gen_range(1..40));
        if used_ips.insert(ip.clone()) {
            return ip;
        }
    };
    let mut fresh_port = |rng: &mut StdRng| loop {
        let p: u16 = rng.gen_range(20000..60000);
        if used_ports.insert(p) {
            return p;
        }
    };
    let mut chunks = Vec::new();
    let mut gold = Vec::new();
    for i in 0..200u32 {
        let (src, dst) = (fresh_ip(&mut rng), fresh_ip(&mut rng));
        let port = fresh_port(&mut rng);
        let dev = devices[rng.gen_range(0..devices.len())];
        let svc = services[rng.gen_range(0..services.len())];
        let text = format!(
            "Flow F{i}: {src}:{port} <-> {dst}:{svc_port} (TCP)\nDevice: {dev} talking {svc} to the {other}\n\
             Packets: {pk}, bytes {by}, connection completed and closed normally",
            svc_port = rng.gen_range(1..1024),
            other = devices[rng.gen_range(0..devices.len())],
            pk = rng.gen_range(3..40),
            by = rng.gen_range(200..9000),
        );
        let c = Chunk::new(&text, Modality::FlowSummary, Level::Flow, Some(format!("F{i}")), i).unwrap();
        if i % 4 == 0 {
            gold.push((c.chunk_id.clone(), src, port, dev, svc));
        }
        chunks.push(c);
    }
    let e = HashingEmbedder::default();
    let store = Arc::new(SessionStore::in_memory(chunks, &e).map_err(|x| x.to_string())?);
    let retriever = Retriever::new(store);
    let hybrid = RetrievalConfig {
        top_k: 5,
        ..RetrievalConfig::default()
    };
    let dense = RetrievalConfig {
        top_k: 5,
        ..RetrievalConfig::dense_only()
    };
    let (mut hit_h, mut hit_d) = (0, 0);
    for (id, ip, port, dev, svc) in &gold {
        let q = format!("What did the {dev} at {ip} do over {svc} from port {port}?");
        let in_top5 = |cfg: &RetrievalConfig| -> Result<bool, String> {
            let b = retriever.retrieve(&q, cfg, &e, None).map_err(|x| x.to_string())?;
            Ok(b.ranked.iter().take(5).any(|r| &r.chunk.chunk_id == id))
        };
        hit_h += in_top5(&hybrid)? as usize;
        hit_d += in_top5(&dense)? as usize;
    }
    let (rh, rd) = (hit_h as f64 / gold.len() as f64, hit_d as f64 / gold.len() as f64);
    let detail = format!("{} queries, recall@5 hybrid {rh:.2} dense {rd:.2} (need hybrid >= 0.90 and > dense)", gold.len());
    ensure(gold.len() == 50, || "expected 50 queries".into())?;
    ensure(rh >= 0.9 && rh > rd, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// Flow reconstruction

fn flow_equivalence() -> Outcome {
    let mut total_packets = 0;
    for seed in 0..50u64 {
        let synth = random_capture(seed, 1000);
        let (_, packets) = parse_bytes(&synth.bytes).map_err(|e| e.to_string())?;
        ensure(packets.len() == synth.frames, || format!("seed {seed}: parsed {} of {} frames", packets.len(), synth.frames))?;
        total_packets += packets.len();
        let got = assemble_flows(&packets);

        // Brute force: for every keyed packet, scan the group list linearly.
        let mut groups: Vec<(FlowKey, u64, u64)> = Vec::new();
        let mut skipped = 0u64;
        for p in &packets {
            match FlowKey::of_packet(p) {
                None => skipped += 1,
                Some(k) => match groups.iter_mut().find(|g| g.0 == k) {
                    Some(g) => {
                        g.1 += 1;
                        g.2 += p.frame_len as u64;
                    }
                    None => groups.push((k, 1, p.frame_len as u64)),
                },
            }
        }
        ensure(got.flows.len() == groups.len(), || {
            format!("seed {seed}: {} flows, oracle {}", got.flows.len(), groups.len())
        })?;
        for (f, g) in got.flows.iter().zip(&groups) {
            ensure(f.key == g.0 && f.pkt_count == g.1 && f.byte_count == g.2, || {
                format!("seed {seed}: flow {:?} {}/{} vs oracle {}/{}", f.key, f.pkt_count, f.byte_count, g.1, g.2)
            })?;
        }
        ensure(got.skipped == skipped && got.total_packets() == packets.len() as u64, || {
            format!("seed {seed}: packet conservation")
        })?;
        ensure(got.flows.len() == synth.flows.len(), || format!("seed {seed}: generator ground truth"))?;
        for (f, s) in got.flows.iter().zip(&synth.flows) {
            ensure(
                f.key == s.key && f.pkt_count == s.packets as u64 && f.byte_count == s.bytes && f.flag_seq == s.flags,
                || format!("seed {seed}: flow {:?} disagrees with generator", f.key),
            )?;
        }
    }
    Ok(format!("50 captures, {total_packets} packets, exact match and conservation"))
}

// ---------------------------------------------------------------------------
// Connection signatures

/// The decision table as a single forward scan from the opening SYN.
fn signature_table(seq: &[TcpFlags]) -> ConnectionSignature {
    use ConnectionSignature::*;
    let has = |f: TcpFlags, x: TcpFlags| f.contains(x);
    let Some(start) = seq.iter().position(|&f| has(f, TcpFlags::SYN) && !has(f, TcpFlags::ACK)) else {
        return NoHandshakeObserved;
    };
    // 0: SYN seen, 1: SYN+ACK seen, 2: handshake complete
    let mut state = 0;
    let mut fin_early = false;
    let mut fins_late = 0;
    for (i, &f) in seq[start..].iter().enumerate() {
        if has(f, TcpFlags::RST) {
            return match (state, i) {
                (2, _) => MidstreamReset,
                (_, 0..=2) => RejectedOnConnect,
                _ => PrematureTermination,
            };
        }
        if state == 0 && i > 0 && has(f, TcpFlags::SYN) && has(f, TcpFlags::ACK) {
            state = 1;
        } else if state == 1 && has(f, TcpFlags::ACK) && !has(f, TcpFlags::SYN) {
            state = 2;
        }
        if has(f, TcpFlags::FIN) {
            if state == 2 {
                fins_late += 1;
            } else {
                fin_early = true;
            }
        }
    }
    match (fin_early, state, fins_late) {
        (true, ..) => PrematureTermination,
        (false, 2, n) if n >= 2 => GracefulClose,
        (false, 2, _) => CompleteHandshake,
        _ => HandshakeInProgress,
    }
}

fn signature_exhaustive() -> Outcome {
    let sets: Vec<TcpFlags> = (0u8..64).map(TcpFlags::from_bits).collect();
    let mut seq = Vec::with_capacity(4);
    let mut checked = 0u64;
    let mut seen = BTreeSet::new();
    fn walk(
        sets: &[TcpFlags],
        seq: &mut Vec<TcpFlags>,
        checked: &mut u64,
        seen: &mut BTreeSet<ConnectionSignature>,
    ) -> Result<(), String> {
        let got = decode_flag_sequence(seq);
        let want = signature_table(seq);
        if got != want {
            return Err(format!("{:?}: {got} vs table {want}", seq));
        }
        *checked += 1;
        seen.insert(got);
        if seq.len() < 4 {
            for &s in sets {
                seq.push(s);
                walk(sets, seq, checked, seen)?;
                seq.pop();
            }
        }
        Ok(())
    }
    walk(&sets, &mut seq, &mut checked, &mut seen)?;
    let tcp: BTreeSet<_> = ConnectionSignature::ALL
        .into_iter()
        .filter(|s| *s != ConnectionSignature::Udp)
        .collect();
    ensure(seen == tcp, || format!("signatures reached: {seen:?}"))?;
    Ok(format!("{checked} sequences over 64 flag sets, all 7 TCP signatures reached"))
}

// ---------------------------------------------------------------------------
// Session lifecycle

struct Down;

impl Embedder for Down {
    fn dims(&self) -> usize {
        capsight::corpus::DEFAULT_DIMS
    }
    fn id(&self) -> String {
        "hashing-256".into()
    }
    fn embed(&self, _: &str) -> Result<Vec<f32>, EmbedError> {
        Err(EmbedError::EmbedderUnavailable("injected fault".into()))
    }
}

fn session_lifecycle() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pcaps: Vec<_> = (0..5u64)
        .map(|i| {
            let p = dir.path().join(format!("cap{i}.pcap"));
            std::fs::write(&p, random_capture(100 + i, 200).bytes).unwrap();
            p
        })
        .collect();
    let root = dir.path().join("store");
    let index = CorpusIndex::open(&root).map_err(|e| e.to_string())?;
    let counter = Arc::new(CountingEmbedder::new(HashingEmbedder::default()));
    let mut clients = Clients::offline(default_fixture_dir());
    clients.embedder = counter.clone();
    let mut ids = Vec::new();
    for p in &pcaps[..4] {
        let (_, o) = pipeline::ingest_capture(p, &index, &clients, false).map_err(|e| e.to_string())?;
        ids.push(o.session_id);
    }
    let kept: BTreeSet<String> = index.sessions().unwrap().into_iter().map(|s| s.session_id).collect();
    let want: BTreeSet<String> = ids[1..].iter().cloned().collect();
    ensure(kept == want, || format!("retained {kept:?}, want {want:?}"))?;
    let dirs: BTreeSet<String> = index.session_dirs().unwrap().into_iter().collect();
    ensure(dirs == want, || format!("session dirs {dirs:?}"))?;

    counter.reset();
    let (_, again) = pipeline::ingest_capture(&pcaps[1], &index, &clients, false).map_err(|e| e.to_string())?;
    ensure(again.reused && again.session_id == ids[1], || "re-ingest did not reuse B".into())?;
    ensure(counter.calls() == 0, || format!("re-ingest made {} embed calls", counter.calls()))?;
    ensure(index.latest().unwrap().as_deref() == Some(ids[1].as_str()), || "latest not repointed".into())?;

    let before = std::fs::read(root.join("index.json")).unwrap();
    let dirs_before = index.session_dirs().unwrap();
    clients.embedder = Arc::new(Down);
    let err = pipeline::ingest_capture(&pcaps[4], &index, &clients, false);
    ensure(err.is_err(), || "faulty ingest succeeded".into())?;
    ensure(std::fs::read(root.join("index.json")).unwrap() == before, || "index.json changed".into())?;
    ensure(index.session_dirs().unwrap() == dirs_before, || "session dirs changed".into())?;
    Ok("A,B,C,D -> {B,C,D}; re-ingest 0 embed calls, latest repointed; fault leaves index unchanged".into())
}

// ---------------------------------------------------------------------------
// Agent bounds

/// Always drafts a claim the evidence cannot support.
struct Fabricator;

impl ChatClient for Fabricator {
    fn complete(&self, _: &str, _: &str) -> Result<String, ChatError> {
        Ok("The quantum flux relay at 203.0.113.250 exfiltrated telemetry over port 31337.".into())
    }
}

/// Copies the first evidence line but swaps its first IPv4 address.
struct Swapper;

impl ChatClient for Swapper {
    fn complete(&self, _: &str, user: &str) -> Result<String, ChatError> {
        let (passages, _) = parse_user_prompt(user);
        let Some(p) = passages.first() else {
            return Ok(capsight::agent::UNAVAILABLE.into());
        };
        let line = p.text.lines().find(|l| l.split_whitespace().any(|w| first_ipv4(w).is_some())).unwrap_or("");
        let out: Vec<String> = line
            .split_whitespace()
            .map(|w| match first_ipv4(w) {
                Some(ip) => w.replace(&ip, "203.0.113.250"),
                None => w.to_string(),
            })
            .collect();
        Ok(out.join(" "))
    }
}

fn first_ipv4(word: &str) -> Option<String> {
    word.split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .find(|s| s.parse::<std::net::Ipv4Addr>().is_ok())
        .map(str::to_string)
}

fn iot_session(dir: &Path, clients: &Clients) -> Result<(CorpusIndex, Arc<Retriever>), String> {
    let index = CorpusIndex::open(dir).map_err(|e| e.to_string())?;
    pipeline::ingest_capture(default_fixture_dir().join("iot_mixed.pcap"), &index, clients, false)
        .map_err(|e| e.to_string())?;
    let r = pipeline::open_session(&index, None).map_err(|e| e.to_string())?;
    Ok((index, r))
}

fn agent_bounds() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let clients = Clients::offline(default_fixture_dir());
    let (_, retriever) = iot_session(dir.path(), &clients)?;
    let questions = [
        "What did 52.0.0.1 do?",
        "Which flows were reset?",
        "How many flows are in this capture?",
        "What is the dominant attack class?",
        "Which MQTT topics were published?",
    ];
    let mut answers = 0;
    for max_steps in 1..=5u32 {
        let cfg = AgentConfig {
            max_steps,
            ..AgentConfig::default()
        };
        let agent = Agent::new(retriever.clone(), clients.embedder.clone(), Arc::new(Fabricator)).with_config(cfg);
        for q in questions {
            let rec = agent.answer(q);
            answers += 1;
            ensure(rec.steps_used <= max_steps, || format!("{q}: {} steps > {max_steps}", rec.steps_used))?;
            ensure(rec.source_class == SourceClass::Insufficient, || format!("{q}: fabricated draft kept as {:?}", rec.source_class))?;
            ensure(!rec.text.contains("203.0.113.250"), || format!("{q}: fabricated identifier in answer"))?;
        }
    }

    let agent = Agent::new(retriever.clone(), clients.embedder.clone(), Arc::new(Swapper));
    for q in ["What did 52.0.0.1 do?", "Which host scanned ports?", "Show the DDoS flows"] {
        let rec = agent.answer(q);
        answers += 1;
        ensure(!rec.text.contains("203.0.113.250"), || format!("{q}: swapped identifier survived: {}", rec.text))?;
        ensure(rec.source_class != SourceClass::CaptureGrounded || !rec.cited_chunk_ids.is_empty(), || {
            format!("{q}: grounded without citations")
        })?;
    }
    let verdict = faithfulness_check(
        "Flow C1: 203.0.113.250:4444 <-> 10.0.0.5:1883 (TCP)",
        &[("c1", "Flow C1: 52.0.0.1:4444 <-> 10.0.0.5:1883 (TCP)")],
        0.25,
    );
    ensure(
        !verdict.passed && verdict.per_sentence[0].missing_identifiers.iter().any(|m| m == "203.0.113.250"),
        || {
            format!("identifier swap not demoted: {verdict:?}")
        },
    )?;

    let agent = clients.agent(retriever.clone(), AgentConfig::default());
    let qa = eval::load_qa_set(default_fixture_dir().join("qa/iot_mixed.jsonl")).map_err(|e| e.to_string())?;
    for pair in &qa {
        let rec = agent.answer(&pair.question);
        answers += 1;
        ensure(rec.steps_used <= agent.config().max_steps, || format!("{}: step bound", pair.question))?;
        if rec.source_class == SourceClass::CaptureGrounded {
            ensure(!rec.cited_chunk_ids.is_empty(), || format!("{}: grounded without citations", pair.question))?;
            for id in &rec.cited_chunk_ids {
                ensure(retriever.store().chunks.iter().any(|c| &c.chunk_id == id), || {
                    format!("{}: cites unknown chunk {id}", pair.question)
                })?;
            }
        }
    }
    Ok(format!("{answers} answers: steps within max_steps 1..=5, fabrications demoted, grounded answers cite chunks"))
}

// ---------------------------------------------------------------------------
// Hermetic end to end, and the profiler

struct E2e {
    report: eval::BenchReport,
    requests: usize,
}

fn hermetic_run(dir: &Path) -> Result<E2e, String> {
    let recorder = Arc::new(RecordingTransport::new(StubTransport::unreachable()));
    let endpoints = Endpoints {
        classifier: Some("http://198.51.100.10:9000/classify".into()),
        embedder: Some("http://198.51.100.10:9001".into()),
        chat: Some("http://198.51.100.10:9002".into()),
        reranker: Some("http://198.51.100.10:9003".into()),
        search: Some("https://search.example.com".into()),
        live_intel: true,
    };
    let clients = Clients::offline(default_fixture_dir())
        .with_endpoints_via(&endpoints, recorder.clone(), true)
        .map_err(|e| e.to_string())?;

    let pcap = default_fixture_dir().join("iot_mixed.pcap");
    let analysis = pipeline::analyze_path(&pcap, &clients, false).map_err(|e| e.to_string())?;
    ensure(analysis.report.render().contains("== Global Summary =="), || "report missing summary".into())?;
    let index = CorpusIndex::open(dir).map_err(|e| e.to_string())?;
    let (_, outcome) = pipeline::ingest_capture(&pcap, &index, &clients, false).map_err(|e| e.to_string())?;
    let retriever = pipeline::open_session(&index, Some(&outcome.session_id)).map_err(|e| e.to_string())?;
    let rec = clients
        .agent(retriever.clone(), AgentConfig::default())
        .answer("What is the abuse confidence of 52.0.0.1?");
    ensure(rec.source_class == SourceClass::CaptureGrounded && rec.text.contains("90"), || {
        format!("end-to-end answer: {rec:?}")
    })?;
    let qa = eval::load_qa_set(default_fixture_dir().join("qa/iot_mixed.jsonl")).map_err(|e| e.to_string())?;
    let responder = AgentResponder::new().with_default(retriever, &clients, &AgentConfig::default());
    let report = run_benchmark(&qa, &responder, &HashingEmbedder::default(), "fixture", None).map_err(|e| e.to_string())?;
    Ok(E2e {
        report,
        requests: recorder.requests().len() + recorder.non_loopback().len(),
    })
}

fn hermeticity(run: &Result<E2e, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    ensure(run.requests == 0, || format!("{} requests left the process", run.requests))?;
    ensure(run.report.rows.len() == 80, || format!("{} benchmark rows", run.report.rows.len()))?;
    let hybrid = &run.report.overall[1].metrics;
    let dense = &run.report.overall[0].metrics;
    Ok(format!(
        "0 outbound requests; pcap -> report -> ingest -> query -> 80 scored answers (BERT-F dense {:.2} / hybrid {:.2})",
        dense.bert_f, hybrid.bert_f
    ))
}

fn profiler(run: &Result<E2e, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let (header, lines) = run.report.table2();
    for f in ProfileReport::FIELDS {
        ensure(header.iter().any(|h| h.contains(f)) || lines.iter().any(|l| l.iter().any(|c| c.contains(f))), || {
            format!("resource table lacks {f:?}")
        })?;
    }
    for row in &run.report.rows {
        let p = &row.profile;
        ensure(p.values().len() == 6 && p.is_valid(), || format!("invalid profile {p:?}"))?;
        ensure(p.exec_time_s > 0.0, || "zero execution time".into())?;
        ensure(p.avg_response_bytes == row.answer.len() as f64, || {
            format!("response bytes {} vs answer length {}", p.avg_response_bytes, row.answer.len())
        })?;
    }
    for s in run.report.overall.iter().chain(&run.report.per_pcap) {
        ensure(s.profile.is_valid(), || format!("invalid summary profile {:?}", s.profile))?;
    }
    Ok(format!("{} runs, six fields each, non-negative, bytes = answer length", run.report.rows.len()))
}

// ---------------------------------------------------------------------------

fn report(name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
    let took = t.elapsed();
    let (ok, detail) = match out {
        Ok(d) if took < budget => (true, d),
        Ok(d) => (false, format!("{d}; over budget")),
        Err(e) => (false, e),
    };
    let line = format!(
        "[acceptance] {} {name}: {detail} ({:.2}s, budget {}s)",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        budget.as_secs()
    );
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
    ok
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let mut results: HashMap<&str, bool> = HashMap::new();
    results.insert("metrics", report("metric oracles", secs(10), metric_oracles));
    results.insert("bm25", report("bm25 brute-force equivalence", secs(30), bm25_equivalence));
    results.insert("hybrid", report("hybrid beats dense on identifier queries", secs(60), hybrid_vs_dense));
    results.insert("flows", report("flow reconstruction equivalence", secs(30), flow_equivalence));
    results.insert("signature", report("connection-signature table", secs(10), signature_exhaustive));
    results.insert("lifecycle", report("session lifecycle", secs(20), session_lifecycle));
    results.insert("agent", report("agent bounds and integrity", secs(20), agent_bounds));

    let dir = tempfile::tempdir().unwrap();
    let mut run: Result<E2e, String> = Err("end-to-end run did not complete".into());
    results.insert(
        "hermetic",
        report("hermeticity and end-to-end fixture pipeline", secs(120), || {
            run = hermetic_run(dir.path());
            hermeticity(&run)
        }),
    );
    results.insert("profiler", report("profiler fields", secs(5), || profiler(&run)));

    let failed: Vec<&str> = results.iter().filter(|(_, ok)| !**ok).map(|(k, _)| *k).collect();
    assert!(failed.is_empty(), "acceptance criteria failed: {failed:?}");
}

