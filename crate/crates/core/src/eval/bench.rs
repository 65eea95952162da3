use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::metrics::MetricReport;
use super::profile::{GpuProbe, ProfileReport, Profiler};
use crate::agent::{Agent, AgentConfig, AnswerRecord, SourceClass};
use crate::corpus::{Embedder, Modality};
use crate::pipeline::Clients;
use crate::retrieval::{RetrievalConfig, RetrievalMode, Retriever};
use crate::{Error, Result};

fn de_modality<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Modality, D::Error> {
    let s = String::deserialize(d)?;
    Modality::parse(&s).ok_or_else(|| {
        serde::de::Error::custom(format!(
            "unknown source_modality {s:?} (expected protocol_log, report, flow_summary or packet_view)"
        ))
    })
}

fn ser_modality<S: Serializer>(m: &Modality, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(m.as_str())
}

/// One ground-truth question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub reference_answer: String,
    #[serde(deserialize_with = "de_modality", serialize_with = "ser_modality")]
    pub source_modality: Modality,
    pub pcap_id: String,
}

/// Parses a JSON Lines QA set. Blank lines are skipped; empty questions or
/// references are rejected with their line number.
pub fn parse_qa_jsonl(text: &str) -> Result<Vec<QAPair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let what = || format!("QA line {}", i + 1);
        let pair: QAPair = serde_json::from_str(line).map_err(|e| Error::malformed(what(), e))?;
        if pair.question.trim().is_empty() {
            return Err(Error::malformed(what(), "empty question"));
        }
        if pair.reference_answer.trim().is_empty() {
            return Err(Error::malformed(what(), "empty reference_answer"));
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn load_qa_set(path: impl AsRef<Path>) -> Result<Vec<QAPair>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_qa_jsonl(&text)
}

/// Produces an answer for one question under one retrieval arm.
pub trait Responder {
    fn respond(&self, pair: &QAPair, arm: RetrievalMode) -> Result<AnswerRecord>;
}

/// Agents over ingested sessions, keyed by `pcap_id`. Questions whose
/// `pcap_id` has no session go to the default session when one is set.
pub struct AgentResponder {
    agents: BTreeMap<String, (Agent, Agent)>,
    default: Option<(Agent, Agent)>,
}

fn arm_configs(base: &AgentConfig) -> (AgentConfig, AgentConfig) {
    let dense = AgentConfig {
        retrieval: RetrievalConfig {
            top_k: base.retrieval.top_k,
            ..RetrievalConfig::dense_only()
        },
        ..base.clone()
    };
    let hybrid = AgentConfig {
        retrieval: RetrievalConfig {
            mode: RetrievalMode::Hybrid,
            ..base.retrieval.clone()
        },
        ..base.clone()
    };
    (dense, hybrid)
}

impl Default for AgentResponder {
    fn default() -> Self {
        Self::new()
    }
}

impl AgentResponder {
    pub fn new() -> Self {
        Self {
            agents: BTreeMap::new(),
            default: None,
        }
    }

    fn pair(clients: &Clients, retriever: Arc<Retriever>, cfg: &AgentConfig) -> (Agent, Agent) {
        let (dense, hybrid) = arm_configs(cfg);
        (clients.agent(retriever.clone(), dense), clients.agent(retriever, hybrid))
    }

    pub fn with_session(mut self, pcap_id: impl Into<String>, retriever: Arc<Retriever>, clients: &Clients, cfg: &AgentConfig) -> Self {
        self.agents.insert(pcap_id.into(), Self::pair(clients, retriever, cfg));
        self
    }

    pub fn with_default(mut self, retriever: Arc<Retriever>, clients: &Clients, cfg: &AgentConfig) -> Self {
        self.default = Some(Self::pair(clients, retriever, cfg));
        self
    }
}

impl Responder for AgentResponder {
    fn respond(&self, pair: &QAPair, arm: RetrievalMode) -> Result<AnswerRecord> {
        let (dense, hybrid) = self
            .agents
            .get(&pair.pcap_id)
            .or(self.default.as_ref())
            .ok_or_else(|| Error::UnknownSession(pair.pcap_id.clone()))?;
        Ok(match arm {
            RetrievalMode::DenseOnly => dense.answer(&pair.question),
            RetrievalMode::Hybrid => hybrid.answer(&pair.question),
        })
    }
}

pub fn arm_name(arm: RetrievalMode) -> &'static str {
    match arm {
        RetrievalMode::DenseOnly => "Dense",
        RetrievalMode::Hybrid => "Hybrid",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub pcap_id: String,
    pub question: String,
    #[serde(serialize_with = "ser_modality", deserialize_with = "de_modality")]
    pub source_modality: Modality,
    pub arm: RetrievalMode,
    pub answer: String,
    pub source_class: SourceClass,
    pub metrics: MetricReport,
    pub profile: ProfileReport,
}

/// Means over the rows of one PCAP (or all PCAPs) under one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub pcap_id: Option<String>,
    pub arm: RetrievalMode,
    pub questions: usize,
    pub metrics: MetricReport,
    pub profile: ProfileReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Column prefix, typically the chat model name.
    pub label: String,
    pub rows: Vec<BenchRow>,
    /// Per PCAP, in first-seen order, dense then hybrid.
    pub per_pcap: Vec<ArmSummary>,
    /// Over all questions, dense then hybrid. Empty for an empty QA set.
    pub overall: Vec<ArmSummary>,
}

pub const ARMS: [RetrievalMode; 2] = [RetrievalMode::DenseOnly, RetrievalMode::Hybrid];

/// Runs every question under both arms, dense first. Each answer is timed
/// on its own; scoring happens outside the profiled window.
pub fn run_benchmark(
    qa: &[QAPair],
    responder: &dyn Responder,
    scorer: &dyn Embedder,
    label: &str,
    gpu: Option<&dyn GpuProbe>,
) -> Result<BenchReport> {
    let mut rows = Vec::with_capacity(qa.len() * 2);
    for arm in ARMS {
        for pair in qa {
            let prof = Profiler::start(gpu);
            let rec = responder.respond(pair, arm)?;
            let profile = prof.finish(&[rec.text.as_str()]);
            let metrics = MetricReport::score(&rec.text, &pair.reference_answer, scorer)?;
            rows.push(BenchRow {
                pcap_id: pair.pcap_id.clone(),
                question: pair.question.clone(),
                source_modality: pair.source_modality,
                arm,
                answer: rec.text,
                source_class: rec.source_class,
                metrics,
                profile,
            });
        }
    }
    let mut pcaps: Vec<&str> = Vec::new();
    for p in qa {
        if !pcaps.contains(&p.pcap_id.as_str()) {
            pcaps.push(&p.pcap_id);
        }
    }
    let summarize = |pcap: Option<&str>, arm: RetrievalMode| {
        let sel: Vec<&BenchRow> = rows
            .iter()
            .filter(|r| r.arm == arm && pcap.is_none_or(|p| r.pcap_id == p))
            .collect();
        let metrics: Vec<MetricReport> = sel.iter().map(|r| r.metrics).collect();
        let profiles: Vec<ProfileReport> = sel.iter().map(|r| r.profile).collect();
        MetricReport::mean(&metrics).map(|m| ArmSummary {
            pcap_id: pcap.map(str::to_string),
            arm,
            questions: sel.len(),
            metrics: m,
            profile: ProfileReport::mean(&profiles),
        })
    };
    let per_pcap = pcaps
        .iter()
        .flat_map(|p| ARMS.map(|a| summarize(Some(p), a)))
        .flatten()
        .collect();
    let overall = ARMS.into_iter().filter_map(|a| summarize(None, a)).collect();
    Ok(BenchReport {
        label: label.to_string(),
        rows,
        per_pcap,
        overall,
    })
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

impl BenchReport {
    fn columns(&self) -> Vec<String> {
        ARMS.iter().map(|a| format!("{} ({})", self.label, arm_name(*a))).collect()
    }

    /// Quality table: one block of four metric lines per PCAP, one column
    /// per arm.
    pub fn table1(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["PCAP".to_string(), "Metric".to_string()];
        header.extend(self.columns());
        let mut lines = Vec::new();
        for pair in self.per_pcap.chunks(ARMS.len()) {
            let pcap = pair[0].pcap_id.clone().unwrap_or_default();
            let cell = |f: &dyn Fn(&MetricReport) -> String| pair.iter().map(|s| f(&s.metrics)).collect::<Vec<_>>();
            let metric_rows: [(&str, Vec<String>); 4] = [
                (
                    "BERT (p/r/f)",
                    cell(&|m| format!("{} / {} / {}", fmt2(m.bert_p), fmt2(m.bert_r), fmt2(m.bert_f))),
                ),
                (
                    "ROUGE (r1/r2/rL)",
                    cell(&|m| format!("{} / {} / {}", fmt2(m.rouge1), fmt2(m.rouge2), fmt2(m.rouge_l))),
                ),
                ("BLEU", cell(&|m| fmt2(m.bleu))),
                ("METEOR", cell(&|m| fmt2(m.meteor))),
            ];
            for (i, (name, cells)) in metric_rows.into_iter().enumerate() {
                let mut line = vec![if i == 0 { pcap.clone() } else { String::new() }, name.to_string()];
                line.extend(cells);
                lines.push(line);
            }
        }
        (header, lines)
    }

    /// Resource table: one line per resource field, one column per arm.
    pub fn table2(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["Metric".to_string()];
        header.extend(self.columns());
        let lines = if self.overall.is_empty() {
            Vec::new()
        } else {
            ProfileReport::FIELDS
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let mut line = vec![name.to_string()];
                    line.extend(self.overall.iter().map(|s| format!("{:.4}", s.profile.values()[i])));
                    line
                })
                .collect()
        };
        (header, lines)
    }

    pub fn table1_csv(&self) -> String {
        let (h, l) = self.table1();
        to_csv(&h, &l)
    }

    pub fn table2_csv(&self) -> String {
        let (h, l) = self.table2();
        to_csv(&h, &l)
    }

    /// One line per question and arm with every metric and profile field.
    pub fn rows_csv(&self) -> String {
        let header: Vec<String> = [
            "pcap_id", "arm", "source_modality", "question", "source_class", "bleu", "rouge1", "rouge2", "rougeL",
            "meteor", "bert_p", "bert_r", "bert_f", "exec_time_s", "mem_mb", "cpu_pct", "gpu_mem_mb", "tokens",
            "response_bytes", "answer",
        ]
        .map(String::from)
        .to_vec();
        let lines: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let m = &r.metrics;
                let p = &r.profile;
                let mut line = vec![
                    r.pcap_id.clone(),
                    arm_name(r.arm).to_string(),
                    r.source_modality.as_str().to_string(),
                    r.question.clone(),
                    format!("{:?}", r.source_class),
                ];
                line.extend(
                    [m.bleu, m.rouge1, m.rouge2, m.rouge_l, m.meteor, m.bert_p, m.bert_r, m.bert_f]
                        .iter()
                        .map(|v| format!("{v:.4}")),
                );
                line.extend(
                    [p.exec_time_s, p.mem_mb, p.cpu_pct, p.gpu_mem_mb, p.avg_tokens, p.avg_response_bytes]
                        .iter()
                        .map(|v| format!("{v:.4}")),
                );
                line.push(r.answer.clone());
                line
            })
            .collect();
        to_csv(&header, &lines)
    }

    pub fn to_markdown(&self) -> String {
        let (h1, l1) = self.table1();
        let (h2, l2) = self.table2();
        format!(
            "### Retrieval variants\n\n{}\n### System performance and tokens\n\n{}",
            markdown_table(&h1, &l1),
            markdown_table(&h2, &l2)
        )
    }
}

fn to_csv(header: &[String], lines: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(header);
    for l in lines {
        let _ = w.write_record(l);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

pub fn markdown_table(header: &[String], lines: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n", header.iter().map(|h| md_cell(h)).collect::<Vec<_>>().join(" | "));
    out.push_str(&format!("|{}\n", " --- |".repeat(header.len())));
    for l in lines {
        out.push_str(&format!("| {} |\n", l.iter().map(|c| md_cell(c)).collect::<Vec<_>>().join(" | ")));
    }
    out
}
