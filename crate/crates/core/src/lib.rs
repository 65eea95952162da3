//! Capture-to-answer engine for IoT packet captures.
//!
//! `capsight` turns a classic pcap file into four evidence artifacts and
//! answers operator questions over them:
//!
//! 1. [`capture`] parses frames into cleaned [`capture::PacketRecord`]s and
//!    Zeek-style protocol logs keyed by deterministic session uids.
//! 2. [`flow`] rebuilds bidirectional TCP/UDP flows, decodes their connection
//!    signature and renders one narrative block per flow.
//! 3. [`features`] serializes packet and flow rows as `name:value` text,
//!    classifies them and writes an interpretation report.
//! 4. [`enrich`] attaches threat-intelligence summaries for public IPs.
//! 5. [`corpus`] chunks and embeds all four artifacts into versioned session
//!    stores with a content-hash skip guard and three-session retention.
//! 6. [`retrieval`] runs dense, BM25 and keyword search, fuses and reranks
//!    the candidates into an [`retrieval::EvidenceBundle`].
//! 7. [`agent`] drives a bounded plan/act loop with a retrieval-and-answer
//!    tool, a web-lookup tool and a faithfulness check.
//! 8. [`eval`] scores answers (BLEU, ROUGE, METEOR, BERTScore) and profiles
//!    runs for dense-versus-hybrid comparisons.
//!
//! [`pipeline`] wires the stages together end to end. Every model-backed
//! component sits behind a trait with a deterministic local implementation,
//! so the whole stack runs offline.

pub mod agent;
pub mod capture;
pub mod corpus;
pub mod enrich;
pub mod eval;
pub mod features;
pub mod flow;
pub mod pipeline;
pub mod retrieval;
pub mod synth;
pub mod text;
pub mod transport;

mod error;

pub use error::{Error, Result};
