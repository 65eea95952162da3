use approx::assert_relative_eq;
use capsight::agent::{AnswerRecord, FaithfulnessVerdict, SourceClass};
use capsight::corpus::HashingEmbedder;
use capsight::eval::{
    bleu, meteor, parse_qa_jsonl, rouge, rouge_n, run_benchmark, MetricError, QAPair, Responder,
};
use capsight::retrieval::RetrievalMode;
use capsight::Error;
use proptest::prelude::*;

/// Dense answers drop the last word of the reference; hybrid answers echo it.
struct Echo;

impl Responder for Echo {
    fn respond(&self, pair: &QAPair, arm: RetrievalMode) -> capsight::Result<AnswerRecord> {
        let mut words: Vec<&str> = pair.reference_answer.split_whitespace().collect();
        if arm == RetrievalMode::DenseOnly {
            words.pop();
        }
        Ok(AnswerRecord {
            text: words.join(" "),
            cited_chunk_ids: vec!["00000000000000000000000000000000".into()],
            source_class: SourceClass::CaptureGrounded,
            web_citations: Vec::new(),
            steps_used: 1,
            faithfulness: FaithfulnessVerdict {
                per_sentence: Vec::new(),
                passed: true,
            },
        })
    }
}

const QA: &str = r#"{"question": "Which port did the flood target?", "reference_answer": "The flood targeted tcp/80 on 10.0.0.10.", "source_modality": "packet_view", "pcap_id": "a"}

{"question": "What did 10.0.0.5 query?", "reference_answer": "10.0.0.5 queried broker.local and got 10.0.0.10.", "source_modality": "protocol_log", "pcap_id": "b"}
"#;

#[test]
fn qa_parsing() {
    let qa = parse_qa_jsonl(QA).unwrap();
    assert_eq!(qa.len(), 2);
    assert_eq!(qa[1].pcap_id, "b");
    let bad = "{\"question\": \"q\", \"reference_answer\": \"\", \"source_modality\": \"report\", \"pcap_id\": \"a\"}";
    let err = parse_qa_jsonl(&format!("\n{bad}")).unwrap_err();
    assert!(matches!(err, Error::Malformed { .. }));
    assert!(err.to_string().contains("line 2"), "{err}");
    assert!(parse_qa_jsonl("{\"question\": 1}").is_err());
}

#[test]
fn two_question_grid() {
    let qa = parse_qa_jsonl(QA).unwrap();
    let scorer = HashingEmbedder::default();
    let a = run_benchmark(&qa, &Echo, &scorer, "m", None).unwrap();
    let b = run_benchmark(&qa, &Echo, &scorer, "m", None).unwrap();
    assert_eq!(a.rows.len(), 4);
    let metrics = |r: &capsight::eval::BenchReport| r.rows.iter().map(|x| x.metrics).collect::<Vec<_>>();
    assert_eq!(metrics(&a), metrics(&b));
    assert_eq!(a.per_pcap.len(), 4);
    assert_eq!(a.overall.len(), 2);
    let hybrid = &a.overall[1].metrics;
    assert_relative_eq!(hybrid.bleu, 100.0, epsilon = 1e-9);
    assert_relative_eq!(hybrid.rouge1, 100.0, epsilon = 1e-9);
    assert!(a.overall[0].metrics.rouge1 < hybrid.rouge1);

    let (h1, l1) = a.table1();
    assert_eq!(h1, ["PCAP", "Metric", "m (Dense)", "m (Hybrid)"]);
    assert_eq!(l1.len(), 8);
    assert_eq!((l1[0][0].as_str(), l1[4][0].as_str()), ("a", "b"));
    let (_, l2) = a.table2();
    assert_eq!(l2.len(), 6);
    assert_eq!(a.rows_csv().lines().count(), 5);
    assert!(a.to_markdown().contains("| m (Dense) |"));
}

#[test]
fn empty_qa_set() {
    let r = run_benchmark(&[], &Echo, &HashingEmbedder::default(), "m", None).unwrap();
    assert!(r.rows.is_empty() && r.overall.is_empty());
    assert!(r.table1().1.is_empty());
    assert!(r.table2().1.is_empty());
    assert_eq!(r.table1_csv().lines().count(), 1);
}

#[test]
fn metric_edges() {
    assert_eq!(bleu("a", &[""]), Err(MetricError::EmptyReference));
    assert_eq!(meteor("a", "  "), Err(MetricError::EmptyReference));
    assert_eq!(bleu("", &["the flood"]).unwrap(), 0.0);
    assert_relative_eq!(bleu("10.0.0.5 queried broker.local", &["10.0.0.5 queried broker.local"]).unwrap(), 100.0);
    let r = rouge("tcp/80 was targeted", "tcp/80 was targeted").unwrap();
    assert_relative_eq!(r.r1, 100.0);
    assert_relative_eq!(r.rl, 100.0);
    assert_eq!(rouge_n("x y", "a b", 1).unwrap().f, 0.0);
}

proptest! {
    #[test]
    fn rouge1_recall_falls_as_words_are_dropped(words in prop::collection::vec("[a-z]{1,6}", 2..12)) {
        let reference = words.join(" ");
        let mut last = f64::INFINITY;
        for keep in (1..=words.len()).rev() {
            let cand = words[..keep].join(" ");
            let r = rouge_n(&cand, &reference, 1).unwrap().r;
            prop_assert!(r <= last + 1e-9);
            last = r;
        }
    }
}
