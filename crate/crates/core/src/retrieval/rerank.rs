use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::text::search_tokens;
use crate::transport::{HttpRequest, HttpTransport, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RerankError {
    #[error("reranker unavailable: {0}")]
    RerankerUnavailable(String),
}

/// Scores (query, text) pairs; higher is more relevant.
pub trait Reranker: Send + Sync {
    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError>;
}

/// Token-set F1 between query and chunk.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

pub fn token_f1(query: &str, text: &str) -> f64 {
    let q: HashSet<String> = search_tokens(query).into_iter().collect();
    let c: HashSet<String> = search_tokens(text).into_iter().collect();
    let common = q.intersection(&c).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let p = common / c.len() as f64;
    let r = common / q.len() as f64;
    2.0 * p * r / (p + r)
}

impl Reranker for LexicalReranker {
    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError> {
        Ok(texts.iter().map(|t| token_f1(query, t)).collect())
    }
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

/// HTTP cross-encoder: `POST {base}/rerank {"query","texts"}` →
/// `{"scores"}`. Texts are sent in batches with at most `max_in_flight`
/// requests outstanding.
pub struct RemoteCrossEncoder {
    base: String,
    transport: Arc<dyn HttpTransport>,
    batch_size: usize,
    max_in_flight: usize,
    retry: RetryPolicy,
}

impl RemoteCrossEncoder {
    pub fn new(base: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            transport,
            batch_size: 8,
            max_in_flight: 2,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn score_batch(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError> {
        let url = format!("{}/rerank", self.base);
        let resp: RerankResponse = self
            .retry
            .send(
                self.transport.as_ref(),
                &HttpRequest::post_json(&url, &RerankRequest { query, texts }),
            )
            .and_then(|r| r.json(&url))
            .map_err(|e| RerankError::RerankerUnavailable(e.to_string()))?;
        if resp.scores.len() != texts.len() {
            return Err(RerankError::RerankerUnavailable(format!(
                "expected {} scores, got {}",
                texts.len(),
                resp.scores.len()
            )));
        }
        Ok(resp.scores)
    }
}

impl Reranker for RemoteCrossEncoder {
    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError> {
        let batches: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let mut out = Vec::with_capacity(texts.len());
        for wave in batches.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<f64>, RerankError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|b| s.spawn(move || self.score_batch(query, b))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(RerankError::RerankerUnavailable("panicked".into()))))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{HttpResponse, StubTransport};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    #[test]
    fn f1_prefers_minimal_superset() {
        let q = "dns query";
        let a = token_f1(q, "dns query");
        let b = token_f1(q, "dns query sensor lamp");
        let c = token_f1(q, "modbus");
        assert_eq!(a, 1.0);
        assert!((b - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn in_flight_is_bounded() {
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (l, p) = (live.clone(), peak.clone());
        let t = Arc::new(StubTransport::new(move |req| {
            let n = l.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(n, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            l.fetch_sub(1, Ordering::SeqCst);
            let v: serde_json::Value = serde_json::from_slice(req.body.as_deref().unwrap()).unwrap();
            let n = v["texts"].as_array().unwrap().len();
            Ok(HttpResponse {
                status: 200,
                body: serde_json::to_vec(&serde_json::json!({ "scores": vec![1.0; n] })).unwrap(),
            })
        }));
        let r = RemoteCrossEncoder::new("http://127.0.0.1:1", t).with_batch_size(1);
        let texts = vec!["x"; 7];
        assert_eq!(r.score("q", &texts).unwrap().len(), 7);
        assert_eq!(peak.load(Ordering::SeqCst), 2);
    }
}
