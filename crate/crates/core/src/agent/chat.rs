use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::text::{content_tokens, light_stem, search_tokens};
use crate::transport::{HttpRequest, HttpTransport, RetryPolicy};

/// Drafted when there is no evidence to draw from.
pub const UNAVAILABLE: &str = "The available capture evidence does not contain information to answer this question.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatError {
    #[error("chat model unavailable: {0}")]
    ChatUnavailable(String),
}

/// Drafts text from a system prompt and a user message.
pub trait ChatClient: Send + Sync {
    fn complete(&self, system: &str, user: &str) -> Result<String, ChatError>;
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    system: &'a str,
    user: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    text: String,
}

/// `POST {base}/chat {"system","user"}` → `{"text"}`.
pub struct RemoteChat {
    base: String,
    transport: Arc<dyn HttpTransport>,
    retry: RetryPolicy,
}

impl RemoteChat {
    pub fn new(base: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            transport,
            retry: RetryPolicy {
                timeout: std::time::Duration::from_secs(120),
                ..RetryPolicy::default()
            },
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl ChatClient for RemoteChat {
    fn complete(&self, system: &str, user: &str) -> Result<String, ChatError> {
        let url = format!("{}/chat", self.base);
        let resp: ChatResponse = self
            .retry
            .send(self.transport.as_ref(), &HttpRequest::post_json(&url, &ChatRequest { system, user }))
            .and_then(|r| r.json(&url))
            .map_err(|e| ChatError::ChatUnavailable(e.to_string()))?;
        Ok(resp.text)
    }
}

/// A context passage as it appears in a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPassage {
    pub label: String,
    pub text: String,
}

/// User message: `CONTEXT:`, one `[label]`-headed passage per chunk in
/// rank order, then `QUESTION:`.
pub fn build_user_prompt(query: &str, passages: &[PromptPassage]) -> String {
    let mut out = String::from("CONTEXT:\n");
    for p in passages {
        out.push('[');
        out.push_str(&p.label);
        out.push_str("]\n");
        out.push_str(p.text.trim_end());
        out.push_str("\n\n");
    }
    out.push_str("QUESTION:\n");
    out.push_str(query.trim());
    out.push('\n');
    out
}

/// Inverse of [`build_user_prompt`].
pub fn parse_user_prompt(user: &str) -> (Vec<PromptPassage>, String) {
    let (ctx, question) = match user.rfind("\nQUESTION:\n") {
        Some(i) => (&user[..i], user[i + "\nQUESTION:\n".len()..].trim().to_string()),
        None => (user, String::new()),
    };
    let ctx = ctx.strip_prefix("CONTEXT:\n").unwrap_or(ctx);
    let mut passages: Vec<PromptPassage> = Vec::new();
    for line in ctx.lines() {
        let header = line
            .strip_prefix('[')
            .and_then(|l| l.strip_suffix(']'))
            .filter(|l| !l.is_empty() && !l.contains(char::is_whitespace));
        match (header, passages.last_mut()) {
            (Some(label), _) => passages.push(PromptPassage {
                label: label.to_string(),
                text: String::new(),
            }),
            (None, Some(p)) => {
                p.text.push_str(line);
                p.text.push('\n');
            }
            (None, None) => {}
        }
    }
    for p in &mut passages {
        p.text = p.text.trim_end().to_string();
    }
    (passages, question)
}

const ALIASES: &[(&str, &[&str])] = &[
    ("packet", &["pkt", "pkts", "packets", "pkt_count"]),
    ("byte", &["bytes", "byte_count"]),
    ("reset", &["rst", "rsto", "rstr"]),
    ("port", &["dst_port", "src_port", "dstport", "srcport"]),
    ("vendor", &["vendors"]),
    ("address", &["ip"]),
    ("device", &["vendors", "devices"]),
    ("duration", &["duration"]),
];

/// One set of match variants (pieces, stems, aliases) per query word.
fn term_groups(query: &str) -> Vec<HashSet<String>> {
    let mut groups: Vec<HashSet<String>> = Vec::new();
    for word in query.split_whitespace() {
        let mut g = HashSet::new();
        for t in content_tokens(word) {
            let stem = light_stem(&t);
            for (k, vs) in ALIASES {
                if *k == stem {
                    g.extend(vs.iter().map(|v| v.to_string()));
                }
            }
            g.insert(stem);
            g.insert(t);
        }
        if !g.is_empty() && !groups.contains(&g) {
            groups.push(g);
        }
    }
    groups
}

/// Query terms with stems and aliases, for matching evidence lines.
pub fn expanded_terms(query: &str) -> HashSet<String> {
    term_groups(query).into_iter().flatten().collect()
}

/// Number of query words the line matches through any of their variants.
fn line_matches(line: &str, groups: &[HashSet<String>]) -> usize {
    let toks: HashSet<String> = search_tokens(line).into_iter().flat_map(|t| [light_stem(&t), t]).collect();
    groups.iter().filter(|g| g.iter().any(|t| toks.contains(t))).count()
}

/// Offline drafter: quotes the best-matching lines (at most
/// `lines_per_passage`, ties in passage order) of the first passages that
/// contain query terms, until `max_passages` passages have been quoted.
/// Section headers are never quoted.
#[derive(Debug, Clone)]
pub struct FixtureChat {
    pub max_passages: usize,
    pub lines_per_passage: usize,
}

impl Default for FixtureChat {
    fn default() -> Self {
        Self {
            max_passages: 3,
            lines_per_passage: 2,
        }
    }
}

fn is_header(line: &str) -> bool {
    let l = line.trim();
    l.starts_with("==") && l.ends_with("==")
}

impl FixtureChat {
    pub fn draft(&self, query: &str, passages: &[PromptPassage]) -> String {
        let terms = term_groups(query);
        let mut lines: Vec<&str> = Vec::new();
        let mut quoted = 0;
        for p in passages {
            let scored: Vec<(usize, &str)> = p
                .text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !is_header(l))
                .map(|l| (line_matches(l, &terms), l))
                .filter(|(n, _)| *n > 0)
                .collect();
            let Some(top) = scored.iter().map(|(n, _)| *n).max() else {
                continue;
            };
            let before = lines.len();
            for (_, l) in scored.iter().filter(|(n, _)| *n == top).take(self.lines_per_passage.max(1)) {
                if !lines.contains(l) {
                    lines.push(l);
                }
            }
            if lines.len() > before {
                quoted += 1;
            }
            if quoted >= self.max_passages {
                break;
            }
        }
        if lines.is_empty() {
            if let Some(first) = passages
                .first()
                .and_then(|p| p.text.lines().map(str::trim).find(|l| !l.is_empty() && !is_header(l)))
            {
                return first.to_string();
            }
            return UNAVAILABLE.to_string();
        }
        lines.join("\n")
    }
}

impl ChatClient for FixtureChat {
    fn complete(&self, _system: &str, user: &str) -> Result<String, ChatError> {
        let (passages, question) = parse_user_prompt(user);
        Ok(self.draft(&question, &passages))
    }
}
