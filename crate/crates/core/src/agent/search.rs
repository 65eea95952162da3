use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::text::{search_tokens, truncate_at_word};
use crate::transport::{HttpRequest, HttpTransport, RetryPolicy};

pub const MAX_RESULTS: usize = 3;
pub const MAX_SNIPPET: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebResult {
    pub url: String,
    #[serde(default)]
    pub title: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SearchError {
    #[error("web search unavailable: {0}")]
    SearchUnavailable(String),
}

pub trait SearchClient: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<WebResult>, SearchError>;
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<WebResult>,
}

/// `GET {base}/search?q=` → `{"results": [{"url","title","snippet"}]}`.
pub struct RemoteSearch {
    base: String,
    transport: Arc<dyn HttpTransport>,
    retry: RetryPolicy,
}

impl RemoteSearch {
    pub fn new(base: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            transport,
            retry: RetryPolicy::default(),
        }
    }
}

impl SearchClient for RemoteSearch {
    fn search(&self, query: &str) -> Result<Vec<WebResult>, SearchError> {
        let mut url = url::Url::parse(&format!("{}/search", self.base))
            .map_err(|e| SearchError::SearchUnavailable(e.to_string()))?;
        url.query_pairs_mut().append_pair("q", query);
        let resp: SearchResponse = self
            .retry
            .send(self.transport.as_ref(), &HttpRequest::get(url.as_str()))
            .and_then(|r| r.json(url.as_str()))
            .map_err(|e| SearchError::SearchUnavailable(e.to_string()))?;
        Ok(resp.results)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchFixtureEntry {
    pub query: String,
    /// Matches any query containing all of these tokens.
    #[serde(default)]
    pub keywords: Vec<String>,
    pub results: Vec<WebResult>,
}

/// Recorded results, matched by normalized query text or keyword set.
#[derive(Debug, Clone, Default)]
pub struct FixtureSearch {
    entries: Vec<SearchFixtureEntry>,
}

fn normalize(q: &str) -> String {
    search_tokens(q).join(" ")
}

impl FixtureSearch {
    pub fn new(entries: Vec<SearchFixtureEntry>) -> Self {
        Self { entries }
    }

    /// Reads a JSON array of entries.
    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let p = path.as_ref();
        let bytes = std::fs::read(p).map_err(|e| crate::Error::io(p.display().to_string(), e))?;
        let entries = serde_json::from_slice(&bytes).map_err(|e| crate::Error::malformed("search fixture", e))?;
        Ok(Self { entries })
    }
}

impl SearchClient for FixtureSearch {
    fn search(&self, query: &str) -> Result<Vec<WebResult>, SearchError> {
        let norm = normalize(query);
        let toks: std::collections::HashSet<String> = search_tokens(query).into_iter().collect();
        self.entries
            .iter()
            .find(|e| normalize(&e.query) == norm)
            .or_else(|| {
                self.entries
                    .iter()
                    .find(|e| !e.keywords.is_empty() && e.keywords.iter().all(|k| toks.contains(&k.to_lowercase())))
            })
            .map(|e| e.results.clone())
            .ok_or_else(|| SearchError::SearchUnavailable(format!("no recorded results for {query:?}")))
    }
}

/// Runs a search and applies the result and snippet caps.
pub fn web_lookup_tool(query: &str, client: &dyn SearchClient) -> Result<Vec<WebResult>, SearchError> {
    let results: Vec<WebResult> = client
        .search(query)?
        .into_iter()
        .filter(|r| !r.url.is_empty())
        .take(MAX_RESULTS)
        .map(|mut r| {
            r.snippet = truncate_at_word(r.snippet.trim(), MAX_SNIPPET);
            r
        })
        .collect();
    if results.is_empty() {
        return Err(SearchError::SearchUnavailable("no results".into()));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caps_and_truncation() {
        let long = "word ".repeat(200);
        let r = |i: usize| WebResult {
            url: format!("https://example.org/{i}"),
            title: String::new(),
            snippet: long.clone(),
        };
        let f = FixtureSearch::new(vec![SearchFixtureEntry {
            query: "default mqtt port".into(),
            keywords: vec![],
            results: (0..5).map(r).collect(),
        }]);
        let out = web_lookup_tool("Default MQTT port", &f).unwrap();
        assert_eq!(out.len(), 3);
        for r in &out {
            assert!(r.snippet.len() <= 500);
            assert!(r.snippet.ends_with("word"));
        }
        assert!(web_lookup_tool("unknown", &f).is_err());
    }
}
