use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::text::word_tokens;
use crate::transport::{HttpRequest, HttpTransport, RetryPolicy};

pub const DEFAULT_DIMS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedder returned {got} dimensions, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Maps text to a unit-norm vector of fixed dimension.
pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;
    /// Stable name recorded in store manifests.
    fn id(&self) -> String;
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn dims(&self) -> usize {
        (**self).dims()
    }
    fn id(&self) -> String {
        (**self).id()
    }
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        (**self).embed(text)
    }
}

pub fn l2_normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    true
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

/// Cosine similarity; 0 when either side is all zeros.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic feature-hashing embedder.
///
/// Tokens are lowercased alphanumeric runs; each adds ±1 to two distinct
/// buckets chosen by a 64-bit FNV-1a hash, and the accumulator is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dims: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dims: DEFAULT_DIMS }
    }
}

impl HashingEmbedder {
    pub fn new(dims: usize) -> Self {
        Self { dims: dims.max(2) }
    }
}

impl Embedder for HashingEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn id(&self) -> String {
        format!("hashing-{}", self.dims)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut v = vec![0f32; self.dims];
        let d = self.dims as u64;
        for tok in word_tokens(text) {
            let h = fnv1a(tok.as_bytes());
            let h2 = fnv1a(&h.to_le_bytes());
            let i1 = ((h >> 1) % d) as usize;
            let mut i2 = ((h2 >> 1) % d) as usize;
            if i2 == i1 {
                i2 = (i1 + 1) % self.dims;
            }
            v[i1] += if h & 1 == 0 { 1.0 } else { -1.0 };
            v[i2] += if h2 & 1 == 0 { 1.0 } else { -1.0 };
        }
        if !l2_normalize(&mut v) {
            return Err(EmbedError::EmptyText);
        }
        Ok(v)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f32>,
}

#[derive(Deserialize)]
struct InfoResponse {
    dims: usize,
    #[serde(default)]
    model: Option<String>,
}

/// HTTP embedder: `POST {base}/embed {"text"}` → `{"vector"}`; dimension
/// from `GET {base}/info` → `{"dims", "model"?}`.
pub struct RemoteEmbedder {
    base: String,
    transport: Arc<dyn HttpTransport>,
    dims: usize,
    model: String,
    retry: RetryPolicy,
}

impl RemoteEmbedder {
    pub fn connect(base: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Result<Self, EmbedError> {
        let base = base.into().trim_end_matches('/').to_string();
        let retry = RetryPolicy::default();
        let url = format!("{base}/info");
        let info: InfoResponse = retry
            .send(transport.as_ref(), &HttpRequest::get(&url))
            .and_then(|r| r.json(&url))
            .map_err(|e| EmbedError::EmbedderUnavailable(e.to_string()))?;
        Ok(Self {
            model: info.model.unwrap_or_else(|| "remote".into()),
            base,
            transport,
            dims: info.dims,
            retry,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl Embedder for RemoteEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn id(&self) -> String {
        format!("remote:{}-{}", self.model, self.dims)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let url = format!("{}/embed", self.base);
        let resp: EmbedResponse = self
            .retry
            .send(self.transport.as_ref(), &HttpRequest::post_json(&url, &EmbedRequest { text }))
            .and_then(|r| r.json(&url))
            .map_err(|e| EmbedError::EmbedderUnavailable(e.to_string()))?;
        let mut v = resp.vector;
        if v.len() != self.dims {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dims,
                got: v.len(),
            });
        }
        if !l2_normalize(&mut v) {
            return Err(EmbedError::EmbedderUnavailable("zero vector".into()));
        }
        Ok(v)
    }
}

/// Wraps an embedder and counts calls.
pub struct CountingEmbedder<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E: Embedder> CountingEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<E: Embedder> Embedder for CountingEmbedder<E> {
    fn dims(&self) -> usize {
        self.inner.dims()
    }
    fn id(&self) -> String {
        self.inner.id()
    }
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_properties() {
        let e = HashingEmbedder::default();
        let a = e.embed("dns query").unwrap();
        assert_eq!(a, e.embed("DNS  query").unwrap());
        assert!((dot(&a, &a) - 1.0).abs() < 1e-6);
        let s = e.embed("dns query sensor").unwrap();
        let m = e.embed("modbus write coil").unwrap();
        let l = e.embed("dns query lamp").unwrap();
        assert!(dot(&s, &m) < dot(&s, &l));
        assert_eq!(e.embed("  --  "), Err(EmbedError::EmptyText));
    }

    #[test]
    fn remote_wire_contract() {
        use crate::transport::{HttpResponse, StubTransport};
        let t = Arc::new(StubTransport::new(|req| {
            let body = if req.url.ends_with("/info") {
                br#"{"dims":3,"model":"m"}"#.to_vec()
            } else {
                let v: serde_json::Value = serde_json::from_slice(req.body.as_deref().unwrap_or_default()).unwrap();
                assert_eq!(v["text"], "hi");
                br#"{"vector":[3,0,4]}"#.to_vec()
            };
            Ok(HttpResponse { status: 200, body })
        }));
        let r = RemoteEmbedder::connect("http://127.0.0.1:1/", t).unwrap();
        assert_eq!(r.dims(), 3);
        let v = r.embed("hi").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-6 && (v[2] - 0.8).abs() < 1e-6);
    }
}
