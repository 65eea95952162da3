//! Hybrid retrieval over one session store: dense cosine search, BM25,
//! literal keyword fallback, min-max fusion, dedup and reranking.
//!
//! ```no_run
//! use std::sync::Arc;
//! use capsight::corpus::{CorpusIndex, HashingEmbedder};
//! use capsight::retrieval::{RetrievalConfig, Retriever};
//!
//! let index = CorpusIndex::open("corpus").unwrap();
//! let store = Arc::new(index.load_latest().unwrap());
//! let retriever = Retriever::new(store);
//! let bundle = retriever
//!     .retrieve("which host sent RST to 10.0.0.9?", &RetrievalConfig::default(), &HashingEmbedder::default(), None)
//!     .unwrap();
//! for r in &bundle.ranked {
//!     println!("{:.3} {}", r.candidate.final_score(), r.chunk.chunk_id);
//! }
//! ```

mod bm25;
mod rerank;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{dot, Chunk, EmbedError, Embedder, SessionStore};
use crate::text::search_tokens;

pub use bm25::Bm25Index;
pub use rerank::{token_f1, LexicalReranker, RemoteCrossEncoder, RerankError, Reranker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetrievalMode {
    DenseOnly,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RerankMode {
    CrossEncoder,
    LexicalFallback,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub alpha: f64,
    pub k_dense: usize,
    pub k_sparse: usize,
    pub top_k: usize,
    pub mode: RetrievalMode,
    pub rerank: RerankMode,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            k_dense: 20,
            k_sparse: 20,
            top_k: 8,
            mode: RetrievalMode::Hybrid,
            rerank: RerankMode::LexicalFallback,
            bm25_k1: 1.2,
            bm25_b: 0.75,
        }
    }
}

impl RetrievalConfig {
    pub fn dense_only() -> Self {
        Self {
            mode: RetrievalMode::DenseOnly,
            rerank: RerankMode::Off,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RetrievalError::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.top_k > self.k_dense + self.k_sparse {
            return Err(RetrievalError::InvalidConfig(format!(
                "top_k {} exceeds k_dense + k_sparse",
                self.top_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("the index is empty")]
    EmptyIndex,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("query embedding has {got} dimensions, store has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

/// Per-stage scores for one chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub chunk_id: String,
    #[serde(skip)]
    pub index: usize,
    pub dense_score: Option<f64>,
    pub sparse_score: Option<f64>,
    pub keyword_hit: bool,
    pub fused_score: Option<f64>,
    pub rerank_score: Option<f64>,
}

impl Candidate {
    fn new(index: usize, chunk_id: &str) -> Self {
        Self {
            chunk_id: chunk_id.to_string(),
            index,
            dense_score: None,
            sparse_score: None,
            keyword_hit: false,
            fused_score: None,
            rerank_score: None,
        }
    }

    /// The score of the last stage that ran.
    pub fn final_score(&self) -> f64 {
        self.rerank_score
            .or(self.fused_score)
            .or(self.dense_score)
            .or(self.sparse_score)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEvidence {
    pub rank: usize,
    pub candidate: Candidate,
    pub chunk: Chunk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub query: String,
    pub mode: RetrievalMode,
    pub session_id: String,
    pub ranked: Vec<RankedEvidence>,
    /// Set when reranking failed and fused order was kept.
    pub degraded: bool,
}

impl EvidenceBundle {
    pub fn chunk_ids(&self) -> Vec<&str> {
        self.ranked.iter().map(|r| r.chunk.chunk_id.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }
}

/// Top `k` chunks by dot product with `query` (cosine for unit vectors);
/// ties by chunk_id ascending.
pub fn dense_search(query: &[f32], store: &SessionStore, k: usize) -> Vec<Candidate> {
    let mut hits: Vec<Candidate> = (0..store.len())
        .map(|i| {
            let mut c = Candidate::new(i, &store.chunks[i].chunk_id);
            c.dense_score = Some(dot(query, store.vector(i)));
            c
        })
        .collect();
    hits.sort_by(|a, b| {
        b.dense_score
            .unwrap_or(0.0)
            .total_cmp(&a.dense_score.unwrap_or(0.0))
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    hits.truncate(k);
    hits
}

/// Chunks containing any query token of three or more characters as an
/// exact (case-insensitive) token.
pub fn keyword_fallback(query: &str, chunk_tokens: &[HashSet<String>], chunks: &[Chunk]) -> Vec<Candidate> {
    let q: HashSet<String> = search_tokens(query)
        .into_iter()
        .filter(|t| t.chars().count() >= 3)
        .collect();
    if q.is_empty() {
        return Vec::new();
    }
    chunk_tokens
        .iter()
        .enumerate()
        .filter(|(_, toks)| q.iter().any(|t| toks.contains(t)))
        .map(|(i, _)| {
            let mut c = Candidate::new(i, &chunks[i].chunk_id);
            c.keyword_hit = true;
            c
        })
        .collect()
}

fn min_max(values: &[(String, f64)]) -> HashMap<String, f64> {
    let lo = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|(id, s)| {
            let n = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
            (id.clone(), n)
        })
        .collect()
}

fn cmp_scored(a: &Candidate, b: &Candidate) -> Ordering {
    let f = |s: Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
    f(b.fused_score)
        .total_cmp(&f(a.fused_score))
        .then_with(|| f(b.dense_score).total_cmp(&f(a.dense_score)))
        .then_with(|| f(b.sparse_score).total_cmp(&f(a.sparse_score)))
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

/// Min-max normalizes each list, interpolates with `alpha`, sorts by fused
/// score and appends fallback-only hits ordered by chunk_id.
pub fn fuse(dense: &[Candidate], sparse: &[Candidate], fallback: &[Candidate], alpha: f64) -> Vec<Candidate> {
    let dn = min_max(&dense.iter().map(|c| (c.chunk_id.clone(), c.dense_score.unwrap_or(0.0))).collect::<Vec<_>>());
    let sn = min_max(&sparse.iter().map(|c| (c.chunk_id.clone(), c.sparse_score.unwrap_or(0.0))).collect::<Vec<_>>());
    let mut merged: HashMap<String, Candidate> = HashMap::new();
    for c in dense.iter().chain(sparse) {
        let e = merged.entry(c.chunk_id.clone()).or_insert_with(|| Candidate::new(c.index, &c.chunk_id));
        e.dense_score = e.dense_score.or(c.dense_score);
        e.sparse_score = e.sparse_score.or(c.sparse_score);
    }
    let fallback_ids: HashSet<&str> = fallback.iter().map(|c| c.chunk_id.as_str()).collect();
    let mut scored: Vec<Candidate> = merged
        .into_values()
        .map(|mut c| {
            let d = dn.get(&c.chunk_id).copied().unwrap_or(0.0);
            let s = sn.get(&c.chunk_id).copied().unwrap_or(0.0);
            c.fused_score = Some((alpha * d + (1.0 - alpha) * s).clamp(0.0, 1.0));
            c.keyword_hit = fallback_ids.contains(c.chunk_id.as_str());
            c
        })
        .collect();
    scored.sort_by(cmp_scored);
    let present: HashSet<String> = scored.iter().map(|c| c.chunk_id.clone()).collect();
    let mut extra: Vec<Candidate> = fallback
        .iter()
        .filter(|c| !present.contains(&c.chunk_id))
        .cloned()
        .collect();
    extra.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
    extra.dedup_by(|a, b| a.chunk_id == b.chunk_id);
    scored.extend(extra);
    scored
}

/// Stable reorder by rerank score, descending.
pub fn rerank(
    query: &str,
    mut candidates: Vec<Candidate>,
    chunks: &[Chunk],
    reranker: &dyn Reranker,
) -> Result<Vec<Candidate>, RerankError> {
    if candidates.len() <= 1 {
        return Ok(candidates);
    }
    let texts: Vec<&str> = candidates.iter().map(|c| chunks[c.index].text.as_str()).collect();
    let scores = reranker.score(query, &texts)?;
    for (c, s) in candidates.iter_mut().zip(scores) {
        c.rerank_score = Some(s);
    }
    candidates.sort_by(|a, b| {
        b.rerank_score
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.rerank_score.unwrap_or(f64::NEG_INFINITY))
    });
    Ok(candidates)
}

/// Immutable search structures over one session store.
pub struct Retriever {
    store: Arc<SessionStore>,
    bm25: Bm25Index,
    tokens: Vec<HashSet<String>>,
    bm25_params: (f64, f64),
}

impl Retriever {
    pub fn new(store: Arc<SessionStore>) -> Self {
        Self::with_bm25(store, 1.2, 0.75)
    }

    pub fn with_bm25(store: Arc<SessionStore>, k1: f64, b: f64) -> Self {
        let docs: Vec<Vec<String>> = store.chunks.iter().map(|c| search_tokens(&c.text)).collect();
        let tokens = docs.iter().map(|d| d.iter().cloned().collect()).collect();
        Self {
            bm25: Bm25Index::build(&docs, k1, b),
            store,
            tokens,
            bm25_params: (k1, b),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn bm25_search(&self, query: &str, k: usize) -> Result<Vec<Candidate>, RetrievalError> {
        if self.bm25.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        Ok(self
            .bm25
            .search(&search_tokens(query), k)
            .into_iter()
            .map(|(i, s)| {
                let mut c = Candidate::new(i, &self.store.chunks[i].chunk_id);
                c.sparse_score = Some(s);
                c
            })
            .collect())
    }

    pub fn dense_search(&self, query: &str, k: usize, embedder: &dyn Embedder) -> Result<Vec<Candidate>, RetrievalError> {
        if self.store.is_empty() {
            return Ok(Vec::new());
        }
        let q = embedder.embed(query)?;
        if q.len() != self.store.dims() {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.store.dims(),
                got: q.len(),
            });
        }
        Ok(dense_search(&q, &self.store, k))
    }

    pub fn keyword_fallback(&self, query: &str) -> Vec<Candidate> {
        keyword_fallback(query, &self.tokens, &self.store.chunks)
    }

    /// Runs the configured pipeline. `reranker` is used when
    /// `cfg.rerank == CrossEncoder`; without one, lexical F1 is used.
    pub fn retrieve(
        &self,
        query: &str,
        cfg: &RetrievalConfig,
        embedder: &dyn Embedder,
        reranker: Option<&dyn Reranker>,
    ) -> Result<EvidenceBundle, RetrievalError> {
        cfg.validate()?;
        if self.store.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let mut degraded = false;
        let ranked: Vec<Candidate> = match cfg.mode {
            RetrievalMode::DenseOnly => self.dense_search(query, cfg.k_dense.max(cfg.top_k), embedder)?,
            RetrievalMode::Hybrid => {
                let dense = self.dense_search(query, cfg.k_dense, embedder)?;
                let sparse = if self.bm25_params == (cfg.bm25_k1, cfg.bm25_b) {
                    self.bm25_search(query, cfg.k_sparse)?
                } else {
                    let docs: Vec<Vec<String>> = self.store.chunks.iter().map(|c| search_tokens(&c.text)).collect();
                    Bm25Index::build(&docs, cfg.bm25_k1, cfg.bm25_b)
                        .search(&search_tokens(query), cfg.k_sparse)
                        .into_iter()
                        .map(|(i, s)| {
                            let mut c = Candidate::new(i, &self.store.chunks[i].chunk_id);
                            c.sparse_score = Some(s);
                            c
                        })
                        .collect()
                };
                let fallback = self.keyword_fallback(query);
                let mut fused = fuse(&dense, &sparse, &fallback, cfg.alpha);
                fused.truncate(cfg.k_dense + cfg.k_sparse);
                let lexical = LexicalReranker;
                let reranker: Option<&dyn Reranker> = match cfg.rerank {
                    RerankMode::Off => None,
                    RerankMode::LexicalFallback => Some(&lexical),
                    RerankMode::CrossEncoder => Some(reranker.unwrap_or(&lexical)),
                };
                match reranker {
                    None => fused,
                    Some(r) => match rerank(query, fused.clone(), &self.store.chunks, r) {
                        Ok(v) => v,
                        Err(e) => {
                            log::warn!("rerank failed, keeping fused order: {e}");
                            degraded = true;
                            fused
                        }
                    },
                }
            }
        };
        let mut seen = HashSet::new();
        let ranked = ranked
            .into_iter()
            .filter(|c| seen.insert(c.chunk_id.clone()))
            .take(cfg.top_k)
            .enumerate()
            .map(|(rank, c)| RankedEvidence {
                rank: rank + 1,
                chunk: self.store.chunks[c.index].clone(),
                candidate: c,
            })
            .collect();
        Ok(EvidenceBundle {
            query: query.to_string(),
            mode: cfg.mode,
            session_id: self.store.session_id().to_string(),
            ranked,
            degraded,
        })
    }
}
