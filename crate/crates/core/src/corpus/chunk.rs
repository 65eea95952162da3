use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::embed::{cosine, EmbedError, Embedder};
use crate::capture::ProtocolEvent;
use crate::features::ReportSection;
use crate::flow::split_blocks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    ProtocolLog,
    Report,
    FlowSummary,
    PacketView,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::ProtocolLog,
        Modality::Report,
        Modality::FlowSummary,
        Modality::PacketView,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::ProtocolLog => "protocol_log",
            Modality::Report => "report",
            Modality::FlowSummary => "flow_summary",
            Modality::PacketView => "packet_view",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Session,
    Section,
    Flow,
    Segment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub text: String,
    pub modality: Modality,
    pub level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uid: Option<String>,
    pub seq: u32,
}

/// LF line endings, trailing whitespace trimmed per line, trailing blank
/// lines dropped.
pub fn normalize_text(text: &str) -> String {
    let s = text.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = s.lines().map(str::trim_end).collect();
    lines.join("\n").trim_end_matches('\n').to_string()
}

/// Hex SHA-256 of `modality \0 normalized-text`, truncated to 32 chars.
pub fn chunk_id(text: &str, modality: Modality) -> String {
    let mut h = Sha256::new();
    h.update(modality.as_str().as_bytes());
    h.update([0u8]);
    h.update(normalize_text(text).as_bytes());
    hex::encode(&h.finalize()[..16])
}

impl Chunk {
    /// Builds a chunk from normalized text; `None` if the text is blank.
    pub fn new(text: &str, modality: Modality, level: Level, source_uid: Option<String>, seq: u32) -> Option<Self> {
        let text = normalize_text(text);
        if text.trim().is_empty() {
            return None;
        }
        Some(Self {
            chunk_id: chunk_id(&text, modality),
            text,
            modality,
            level,
            source_uid,
            seq,
        })
    }
}

/// One chunk per uid holding all of its events in timestamp order. Chunks
/// are ordered by their first event.
pub fn chunk_protocol_logs<'a>(events: impl IntoIterator<Item = &'a ProtocolEvent>) -> Vec<Chunk> {
    let mut by_uid: BTreeMap<&str, Vec<&ProtocolEvent>> = BTreeMap::new();
    for e in events {
        by_uid.entry(e.uid.as_str()).or_default().push(e);
    }
    let mut groups: Vec<(&str, Vec<&ProtocolEvent>)> = by_uid.into_iter().collect();
    for (_, evs) in &mut groups {
        evs.sort_by(|a, b| a.ts.cmp(&b.ts).then(a.log_kind.cmp(&b.log_kind)));
    }
    groups.sort_by(|a, b| a.1[0].ts.cmp(&b.1[0].ts).then(a.0.cmp(b.0)));
    groups
        .into_iter()
        .filter_map(|(uid, evs)| {
            let text: Vec<String> = evs.iter().map(|e| e.to_json_line()).collect();
            Chunk::new(&text.join("\n"), Modality::ProtocolLog, Level::Session, Some(uid.to_string()), 0)
        })
        .collect()
}

/// Parses protocol-log JSONL and chunks it. Unparseable lines are counted
/// and skipped.
pub fn chunk_protocol_log_text(jsonl: &str) -> (Vec<Chunk>, usize) {
    let mut bad = 0;
    let mut events = Vec::new();
    for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
        match ProtocolEvent::from_json_line(line) {
            Some(e) => events.push(e),
            None => bad += 1,
        }
    }
    (chunk_protocol_logs(&events), bad)
}

/// One chunk per report section, titled.
pub fn chunk_report(sections: &[ReportSection]) -> Vec<Chunk> {
    sections
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            Chunk::new(
                &format!("== {} ==\n{}", s.title, s.body),
                Modality::Report,
                Level::Section,
                None,
                i as u32,
            )
        })
        .collect()
}

/// One chunk per flow block plus the global summary block.
pub fn chunk_flows(narratives: &str) -> Vec<Chunk> {
    split_blocks(narratives)
        .iter()
        .enumerate()
        .filter_map(|(i, block)| {
            let uid = block
                .strip_prefix("Flow ")
                .and_then(|rest| rest.split(':').next())
                .map(str::to_string);
            Chunk::new(block, Modality::FlowSummary, Level::Flow, uid, i as u32)
        })
        .collect()
}

/// Linear-interpolated percentile (`pct` in 0..=100) of unsorted values.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (pct.clamp(0.0, 100.0) / 100.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticConfig {
    pub breakpoint_pct: f64,
    pub max_chunk_lines: usize,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            breakpoint_pct: 95.0,
            max_chunk_lines: 40,
        }
    }
}

/// Start indices of segments for `lines`, given consecutive distances.
pub fn semantic_breaks(distances: &[f64], n_lines: usize, cfg: SemanticConfig) -> Vec<usize> {
    if n_lines == 0 {
        return Vec::new();
    }
    let threshold = percentile(distances, cfg.breakpoint_pct);
    let max = cfg.max_chunk_lines.max(1);
    let mut starts = vec![0];
    for i in 1..n_lines {
        let semantic = distances.get(i - 1).is_some_and(|d| *d > threshold);
        let full = i - starts[starts.len() - 1] >= max;
        if semantic || full {
            starts.push(i);
        }
    }
    starts
}

/// Splits packet lines where the cosine distance between consecutive line
/// embeddings exceeds the configured percentile, with a hard cap on lines
/// per chunk.
pub fn chunk_packets_semantic(
    lines: &[&str],
    embedder: &dyn Embedder,
    cfg: SemanticConfig,
) -> Result<Vec<Chunk>, EmbedError> {
    let lines: Vec<&str> = lines.iter().copied().filter(|l| !l.trim().is_empty()).collect();
    let mut vecs = Vec::with_capacity(lines.len());
    for l in &lines {
        vecs.push(embedder.embed(l)?);
    }
    let distances: Vec<f64> = vecs.windows(2).map(|w| 1.0 - cosine(&w[0], &w[1])).collect();
    let starts = semantic_breaks(&distances, lines.len(), cfg);
    let mut out = Vec::with_capacity(starts.len());
    for (seq, (i, start)) in starts.iter().enumerate().enumerate() {
        let end = starts.get(i + 1).copied().unwrap_or(lines.len());
        if let Some(c) = Chunk::new(&lines[*start..end].join("\n"), Modality::PacketView, Level::Segment, None, seq as u32) {
            out.push(c);
        }
    }
    Ok(out)
}
