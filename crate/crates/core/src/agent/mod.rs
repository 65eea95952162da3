//! Bounded question-answering agent over one indexed session.
//!
//! Each step retrieves evidence, applies the [`plan`] policy and runs one
//! of two read-only tools: retrieval-and-answer (drafts from the top-k
//! chunks through a [`ChatClient`]) or web lookup (a [`SearchClient`]).
//! Drafts are checked sentence by sentence against their evidence before
//! they are returned.
//!
//! ```no_run
//! use std::sync::Arc;
//! use capsight::agent::{Agent, AgentConfig, FixtureChat};
//! use capsight::corpus::{CorpusIndex, HashingEmbedder};
//! use capsight::retrieval::Retriever;
//!
//! let store = Arc::new(CorpusIndex::open("corpus").unwrap().load_latest().unwrap());
//! let agent = Agent::new(
//!     Arc::new(Retriever::new(store)),
//!     Arc::new(HashingEmbedder::default()),
//!     Arc::new(FixtureChat::default()),
//! );
//! let answer = agent.answer("Which flows were reset?");
//! println!("{:?}: {}", answer.source_class, answer.text);
//! ```

mod audit;
mod chat;
mod faithfulness;
mod plan;
mod search;

use std::collections::HashSet;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::Embedder;
use crate::retrieval::{EvidenceBundle, RetrievalConfig, Retriever};

pub use audit::{digest, AuditEntry, AuditLog};
pub use chat::{
    build_user_prompt, expanded_terms, parse_user_prompt, ChatClient, ChatError, FixtureChat, PromptPassage,
    RemoteChat, UNAVAILABLE,
};
pub use faithfulness::{faithfulness_check, FaithfulnessVerdict, SentenceSupport};
pub use plan::{
    capture_tokens, mentions_capture, plan, refinement_terms, top_score, unknown_addresses, Action, CAPTURE_WORDS,
    PROTOCOL_TOKENS,
};
pub use search::{
    web_lookup_tool, FixtureSearch, RemoteSearch, SearchClient, SearchError, SearchFixtureEntry, WebResult,
    MAX_RESULTS, MAX_SNIPPET,
};

pub const INSTRUCTIONS: &str = "You are a network forensics assistant answering questions about one packet capture.\n\
(i) Treat the top-k retrieved context as primary evidence and avoid unsupported speculation.\n\
(ii) Answer capture-grounded questions using only the provided context, and state explicitly when information is unavailable.\n\
(iii) Pretrained knowledge is allowed only for clearly general IoT questions whose answer is stable and time-insensitive, such as protocol semantics or standard ports.\n\
(iv) Time-varying or source-dependent facts require a focused web lookup and a brief citation.\n\
(v) Reply in plain text, technically precise and concise, and finalize only after checking that every claim is supported.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub max_steps: u32,
    /// τ: minimum top score to answer from retrieved evidence.
    pub rerank_floor: f64,
    /// θ: minimum content-token overlap for a supported sentence.
    pub faithfulness_floor: f64,
    pub instructions: String,
    pub retrieval: RetrievalConfig,
    /// Concurrent `answer` calls admitted per agent.
    pub max_concurrent: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: 3,
            rerank_floor: 0.15,
            faithfulness_floor: 0.25,
            instructions: INSTRUCTIONS.to_string(),
            retrieval: RetrievalConfig::default(),
            max_concurrent: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceClass {
    CaptureGrounded,
    WebSourced,
    Mixed,
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub text: String,
    pub cited_chunk_ids: Vec<String>,
    pub source_class: SourceClass,
    pub web_citations: Vec<WebResult>,
    pub steps_used: u32,
    pub faithfulness: FaithfulnessVerdict,
}

impl AnswerRecord {
    /// Capture-grounded when citations exist, otherwise Insufficient.
    fn grounded(text: String, cited: Vec<String>, steps: u32, verdict: FaithfulnessVerdict) -> Self {
        if cited.is_empty() {
            return Self::insufficient("no evidence chunk supports the draft", steps, verdict);
        }
        Self {
            text,
            cited_chunk_ids: cited,
            source_class: SourceClass::CaptureGrounded,
            web_citations: Vec::new(),
            steps_used: steps,
            faithfulness: verdict,
        }
    }

    fn web(text: String, cited: Vec<String>, web: Vec<WebResult>, steps: u32, verdict: FaithfulnessVerdict) -> Self {
        let source_class = if cited.is_empty() {
            SourceClass::WebSourced
        } else {
            SourceClass::Mixed
        };
        Self {
            text,
            cited_chunk_ids: cited,
            source_class,
            web_citations: web,
            steps_used: steps,
            faithfulness: verdict,
        }
    }

    fn insufficient(reason: &str, steps: u32, verdict: FaithfulnessVerdict) -> Self {
        Self {
            text: format!("{UNAVAILABLE} ({reason})"),
            cited_chunk_ids: Vec::new(),
            source_class: SourceClass::Insufficient,
            web_citations: Vec::new(),
            steps_used: steps,
            faithfulness: verdict,
        }
    }
}

fn empty_verdict() -> FaithfulnessVerdict {
    FaithfulnessVerdict {
        per_sentence: Vec::new(),
        passed: true,
    }
}

fn passages(bundle: &EvidenceBundle) -> Vec<PromptPassage> {
    bundle
        .ranked
        .iter()
        .map(|r| PromptPassage {
            label: r.chunk.chunk_id.clone(),
            text: r.chunk.text.clone(),
        })
        .collect()
}

/// Drafts an answer from the bundle. An empty bundle yields
/// [`UNAVAILABLE`] without calling the model.
pub fn retrieval_answer_tool(
    query: &str,
    bundle: &EvidenceBundle,
    chat: &dyn ChatClient,
    instructions: &str,
) -> Result<String, ChatError> {
    if bundle.is_empty() {
        return Ok(UNAVAILABLE.to_string());
    }
    chat.complete(instructions, &build_user_prompt(query, &passages(bundle)))
}

struct Gate {
    limit: usize,
    busy: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut n = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.0.cv.notify_one();
    }
}

/// Read-only agent bound to one session's retriever.
pub struct Agent {
    retriever: Arc<Retriever>,
    embedder: Arc<dyn Embedder>,
    chat: Arc<dyn ChatClient>,
    search: Option<Arc<dyn SearchClient>>,
    reranker: Option<Arc<dyn crate::retrieval::Reranker>>,
    cfg: AgentConfig,
    audit: Arc<AuditLog>,
    vocabulary: HashSet<String>,
    uids: HashSet<String>,
    gate: Gate,
}

impl Agent {
    pub fn new(retriever: Arc<Retriever>, embedder: Arc<dyn Embedder>, chat: Arc<dyn ChatClient>) -> Self {
        let store = retriever.store();
        let vocabulary = store
            .chunks
            .iter()
            .flat_map(|c| crate::text::search_tokens(&c.text))
            .collect();
        let uids = store
            .chunks
            .iter()
            .filter_map(|c| c.source_uid.as_ref().map(|u| u.to_lowercase()))
            .collect();
        let cfg = AgentConfig::default();
        Self {
            retriever,
            embedder,
            chat,
            search: None,
            reranker: None,
            gate: Gate {
                limit: cfg.max_concurrent,
                busy: Mutex::new(0),
                cv: Condvar::new(),
            },
            cfg,
            audit: Arc::new(AuditLog::in_memory()),
            vocabulary,
            uids,
        }
    }

    pub fn with_config(mut self, cfg: AgentConfig) -> Self {
        self.gate.limit = cfg.max_concurrent.max(1);
        self.cfg = cfg;
        self
    }

    pub fn with_search(mut self, search: Arc<dyn SearchClient>) -> Self {
        self.search = Some(search);
        self
    }

    pub fn with_reranker(mut self, reranker: Arc<dyn crate::retrieval::Reranker>) -> Self {
        self.reranker = Some(reranker);
        self
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = audit;
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn session_id(&self) -> &str {
        self.retriever.store().session_id()
    }

    fn retrieve(&self, query: &str, step: u32, seen: &mut Vec<EvidenceBundle>) -> Option<EvidenceBundle> {
        let out = self.retriever.retrieve(
            query,
            &self.cfg.retrieval,
            self.embedder.as_ref(),
            self.reranker.as_deref(),
        );
        let outcome = match &out {
            Ok(b) => format!("ok: {} chunks, top {:.3}", b.ranked.len(), top_score(b)),
            Err(e) => format!("error: {e}"),
        };
        self.audit.record(self.session_id(), step, "retrieve", query, outcome);
        if let Ok(b) = &out {
            seen.push(b.clone());
        }
        out.ok()
    }

    fn web_answer(
        &self,
        query: &str,
        step: u32,
        partial: Option<(String, Vec<String>)>,
    ) -> Result<AnswerRecord, String> {
        let Some(search) = &self.search else {
            self.audit
                .record(self.session_id(), step, "web_lookup", query, "error: no search client");
            return Err("web lookup is not configured".into());
        };
        let results = web_lookup_tool(query, search.as_ref());
        let results = match results {
            Ok(r) => {
                self.audit
                    .record(self.session_id(), step, "web_lookup", query, format!("ok: {} results", r.len()));
                r
            }
            Err(e) => {
                self.audit
                    .record(self.session_id(), step, "web_lookup", query, format!("error: {e}"));
                return Err(e.to_string());
            }
        };
        let ps: Vec<PromptPassage> = results
            .iter()
            .map(|r| PromptPassage {
                label: r.url.clone(),
                text: r.snippet.clone(),
            })
            .collect();
        let draft = self
            .chat
            .complete(&self.cfg.instructions, &build_user_prompt(query, &ps))
            .map_err(|e| e.to_string())?;
        let refs: Vec<(&str, &str)> = results.iter().map(|r| (r.url.as_str(), r.snippet.as_str())).collect();
        let verdict = faithfulness_check(&draft, &refs, self.cfg.faithfulness_floor);
        let kept = if verdict.passed {
            draft.trim().to_string()
        } else {
            verdict
                .supported_sentences()
                .map(|s| s.sentence.clone())
                .collect::<Vec<_>>()
                .join("\n")
        };
        if kept.trim().is_empty() || kept.trim() == UNAVAILABLE {
            return Err("web results do not support an answer".into());
        }
        let verdict = faithfulness_check(&kept, &refs, self.cfg.faithfulness_floor);
        let sources: Vec<String> = results
            .iter()
            .enumerate()
            .map(|(i, r)| format!("[{}] {}", i + 1, r.url))
            .collect();
        let (text, cited) = match partial {
            Some((capture_text, cited)) => (
                format!(
                    "From the capture:\n{capture_text}\n\nFrom web sources (not the capture):\n{kept}\nSources: {}",
                    sources.join(" ")
                ),
                cited,
            ),
            None => (
                format!("From web sources (not the capture):\n{kept}\nSources: {}", sources.join(" ")),
                Vec::new(),
            ),
        };
        Ok(AnswerRecord::web(text, cited, results, step, verdict))
    }

    /// Runs the perceive–plan–act loop for at most `max_steps` steps.
    pub fn answer(&self, query: &str) -> AnswerRecord {
        self.run(query, &mut Vec::new())
    }

    /// Like [`Agent::answer`], also returning the evidence bundle the answer
    /// cites: the latest retrieval that holds every cited chunk, else the
    /// latest retrieval.
    pub fn answer_with_evidence(&self, query: &str) -> (AnswerRecord, EvidenceBundle) {
        let mut seen = Vec::new();
        let rec = self.run(query, &mut seen);
        let holds_all = |b: &EvidenceBundle| {
            rec.cited_chunk_ids
                .iter()
                .all(|id| b.ranked.iter().any(|r| &r.chunk.chunk_id == id))
        };
        let pick = seen.iter().rposition(holds_all).or(seen.len().checked_sub(1));
        let bundle = match pick {
            Some(i) => seen.swap_remove(i),
            None => EvidenceBundle {
                query: query.to_string(),
                mode: self.cfg.retrieval.mode,
                session_id: self.session_id().to_string(),
                ranked: Vec::new(),
                degraded: false,
            },
        };
        (rec, bundle)
    }

    fn run(&self, query: &str, seen: &mut Vec<EvidenceBundle>) -> AnswerRecord {
        let _slot = self.gate.enter();
        let max_steps = self.cfg.max_steps.max(1);
        let mut q = query.to_string();
        let mut refined = false;
        let mut revised = false;
        let mut last_verdict = empty_verdict();
        let mut partial: Option<(String, Vec<String>)> = None;
        for step in 1..=max_steps {
            if revised && self.search.is_some() && !self.refinable(query) {
                return self
                    .web_answer(query, step, partial.clone())
                    .unwrap_or_else(|reason| self.finalize_partial(partial, &reason, step, last_verdict));
            }
            let Some(bundle) = self.retrieve(&q, step, seen) else {
                return AnswerRecord::insufficient("retrieval failed", step, last_verdict);
            };
            let action = plan(
                query,
                &bundle,
                self.cfg.rerank_floor,
                &self.vocabulary,
                &self.uids,
                refined,
            );
            self.audit
                .record(self.session_id(), step, "plan", &q, format!("{action:?}"));
            match action {
                Action::RefineRetrieval(terms) => {
                    q = format!("{query} {terms}");
                    refined = true;
                }
                Action::WebLookup(_) => {
                    return self
                        .web_answer(query, step, None)
                        .unwrap_or_else(|reason| AnswerRecord::insufficient(&reason, step, empty_verdict()));
                }
                Action::Answer => {
                    let unknown = unknown_addresses(query, &self.vocabulary);
                    if !unknown.is_empty() {
                        self.audit
                            .record(self.session_id(), step, "scope", query, format!("unknown: {}", unknown.join(" ")));
                        let reason = format!("{} does not appear in this capture", unknown.join(", "));
                        return AnswerRecord::insufficient(&reason, step, empty_verdict());
                    }
                    let draft = retrieval_answer_tool(query, &bundle, self.chat.as_ref(), &self.cfg.instructions);
                    let draft = match draft {
                        Ok(d) => {
                            self.audit
                                .record(self.session_id(), step, "retrieval_answer", query, "ok: drafted");
                            d
                        }
                        Err(e) => {
                            self.audit
                                .record(self.session_id(), step, "retrieval_answer", query, format!("error: {e}"));
                            return AnswerRecord::insufficient(&e.to_string(), step, last_verdict);
                        }
                    };
                    if draft.trim().is_empty() || draft.trim() == UNAVAILABLE {
                        return AnswerRecord::insufficient("no relevant evidence", step, empty_verdict());
                    }
                    let refs: Vec<(&str, &str)> = bundle
                        .ranked
                        .iter()
                        .map(|r| (r.chunk.chunk_id.as_str(), r.chunk.text.as_str()))
                        .collect();
                    let verdict = faithfulness_check(&draft, &refs, self.cfg.faithfulness_floor);
                    if verdict.passed {
                        let cited = cited_ids(&verdict, &bundle);
                        return AnswerRecord::grounded(draft.trim().to_string(), cited, step, verdict);
                    }
                    let kept: Vec<String> = verdict.supported_sentences().map(|s| s.sentence.clone()).collect();
                    if !kept.is_empty() {
                        let text = kept.join("\n");
                        let v = faithfulness_check(&text, &refs, self.cfg.faithfulness_floor);
                        partial = Some((text, cited_ids(&v, &bundle)));
                    }
                    last_verdict = verdict;
                    if revised {
                        break;
                    }
                    revised = true;
                    if !refined {
                        let scoped = capture_tokens(query, &self.vocabulary, &self.uids);
                        let terms = refinement_terms(query, &scoped);
                        if !terms.is_empty() {
                            q = format!("{query} {terms}");
                            refined = true;
                        }
                    }
                }
            }
        }
        self.finalize_partial(partial, "evidence did not pass the support check", max_steps, last_verdict)
    }

    fn refinable(&self, query: &str) -> bool {
        !capture_tokens(query, &self.vocabulary, &self.uids).is_empty()
    }

    fn finalize_partial(
        &self,
        partial: Option<(String, Vec<String>)>,
        reason: &str,
        steps: u32,
        verdict: FaithfulnessVerdict,
    ) -> AnswerRecord {
        match partial {
            Some((text, cited)) if !cited.is_empty() => {
                let v = FaithfulnessVerdict {
                    per_sentence: verdict.per_sentence.into_iter().filter(|s| s.supported).collect(),
                    passed: true,
                };
                AnswerRecord::grounded(text, cited, steps, v)
            }
            _ => AnswerRecord::insufficient(reason, steps, verdict),
        }
    }
}

/// Chunks that best support some non-boilerplate sentence, in rank order.
fn cited_ids(verdict: &FaithfulnessVerdict, bundle: &EvidenceBundle) -> Vec<String> {
    let used: HashSet<&str> = verdict
        .per_sentence
        .iter()
        .filter(|s| s.supported)
        .filter_map(|s| s.best_chunk_id.as_deref())
        .collect();
    bundle
        .ranked
        .iter()
        .map(|r| r.chunk.chunk_id.clone())
        .filter(|id| used.contains(id.as_str()))
        .collect()
}
