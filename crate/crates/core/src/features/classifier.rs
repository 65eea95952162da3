use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::parse_text;
use crate::transport::{HttpRequest, HttpTransport, RetryPolicy};

/// The fifteen traffic classes.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Normal,
    MITM,
    Fingerprinting,
    Ransomware,
    Uploading,
    SQL_Injection,
    DDoS_HTTP,
    DDoS_TCP,
    Password,
    Port_Scanning,
    Vul_Scanner,
    Backdoor,
    XSS,
    DDoS_UDP,
    DDoS_ICMP,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 15] = [
        ClassLabel::Normal,
        ClassLabel::MITM,
        ClassLabel::Fingerprinting,
        ClassLabel::Ransomware,
        ClassLabel::Uploading,
        ClassLabel::SQL_Injection,
        ClassLabel::DDoS_HTTP,
        ClassLabel::DDoS_TCP,
        ClassLabel::Password,
        ClassLabel::Port_Scanning,
        ClassLabel::Vul_Scanner,
        ClassLabel::Backdoor,
        ClassLabel::XSS,
        ClassLabel::DDoS_UDP,
        ClassLabel::DDoS_ICMP,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Normal => "Normal",
            ClassLabel::MITM => "MITM",
            ClassLabel::Fingerprinting => "Fingerprinting",
            ClassLabel::Ransomware => "Ransomware",
            ClassLabel::Uploading => "Uploading",
            ClassLabel::SQL_Injection => "SQL_Injection",
            ClassLabel::DDoS_HTTP => "DDoS_HTTP",
            ClassLabel::DDoS_TCP => "DDoS_TCP",
            ClassLabel::Password => "Password",
            ClassLabel::Port_Scanning => "Port_Scanning",
            ClassLabel::Vul_Scanner => "Vul_Scanner",
            ClassLabel::Backdoor => "Backdoor",
            ClassLabel::XSS => "XSS",
            ClassLabel::DDoS_UDP => "DDoS_UDP",
            ClassLabel::DDoS_ICMP => "DDoS_ICMP",
        }
    }

    pub fn is_attack(self) -> bool {
        self != ClassLabel::Normal
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| ClassifyError::InvalidLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error("classifier model unavailable: {0}")]
    ModelUnavailable(String),
    #[error("classifier returned an unknown label {0:?}")]
    InvalidLabel(String),
}

/// Assigns one label and a confidence in [0, 1] to a textualized row.
pub trait Classifier: Send + Sync {
    fn classify(&self, text: &str) -> Result<(ClassLabel, f64), ClassifyError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleCondition {
    AtLeast(&'static str, f64),
    AtMost(&'static str, f64),
    Equals(&'static str, &'static str),
}

impl RuleCondition {
    fn feature(&self) -> &'static str {
        match self {
            RuleCondition::AtLeast(f, _) | RuleCondition::AtMost(f, _) | RuleCondition::Equals(f, _) => f,
        }
    }

    fn holds(&self, value: &str) -> bool {
        match self {
            RuleCondition::AtLeast(_, t) => value.parse::<f64>().is_ok_and(|v| v >= *t),
            RuleCondition::AtMost(_, t) => value.parse::<f64>().is_ok_and(|v| v <= *t),
            RuleCondition::Equals(_, s) => value == *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: &'static str,
    pub label: ClassLabel,
    pub conditions: Vec<RuleCondition>,
}

/// Deterministic ordered rule table.
///
/// A rule applies only when every feature it names is present in the text
/// and every condition holds. The first applicable rule wins with
/// confidence 0.95; otherwise the row is `Normal` with confidence 0.60.
///
/// | id | label | conditions |
/// |---|---|---|
/// | F1 | DDoS_TCP | `syn_count >= 100`, `ack_ratio <= 0.1`, `distinct_dst_ports <= 3` |
/// | F2 | Port_Scanning | `distinct_dst_ports >= 100` |
/// | F3 | DDoS_UDP | `flow.proto = udp`, `pkt_count >= 200`, `distinct_dst_ports <= 3` |
/// | P1 | DDoS_ICMP | `ip.proto = 1`, `pair.pkts >= 100` |
/// | P2 | Port_Scanning | `pair.dst_ports >= 100` |
/// | P3 | DDoS_TCP | `ip.proto = 6`, `tcp.flags.syn = 1`, `tcp.flags.ack = 0`, `pair.pkts >= 100`, `pair.dst_ports <= 3` |
/// | P4 | DDoS_UDP | `ip.proto = 17`, `pair.pkts >= 200`, `pair.dst_ports <= 3` |
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRules {
    pub rules: Vec<Rule>,
    pub hit_confidence: f64,
    pub default_confidence: f64,
}

impl Default for ReferenceRules {
    fn default() -> Self {
        use RuleCondition::*;
        let rule = |id, label, conditions| Rule { id, label, conditions };
        Self {
            rules: vec![
                rule(
                    "F1",
                    ClassLabel::DDoS_TCP,
                    vec![
                        AtLeast("syn_count", 100.0),
                        AtMost("ack_ratio", 0.1),
                        AtMost("distinct_dst_ports", 3.0),
                    ],
                ),
                rule("F2", ClassLabel::Port_Scanning, vec![AtLeast("distinct_dst_ports", 100.0)]),
                rule(
                    "F3",
                    ClassLabel::DDoS_UDP,
                    vec![
                        Equals("flow.proto", "udp"),
                        AtLeast("pkt_count", 200.0),
                        AtMost("distinct_dst_ports", 3.0),
                    ],
                ),
                rule(
                    "P1",
                    ClassLabel::DDoS_ICMP,
                    vec![Equals("ip.proto", "1"), AtLeast("pair.pkts", 100.0)],
                ),
                rule("P2", ClassLabel::Port_Scanning, vec![AtLeast("pair.dst_ports", 100.0)]),
                rule(
                    "P3",
                    ClassLabel::DDoS_TCP,
                    vec![
                        Equals("ip.proto", "6"),
                        Equals("tcp.flags.syn", "1"),
                        Equals("tcp.flags.ack", "0"),
                        AtLeast("pair.pkts", 100.0),
                        AtMost("pair.dst_ports", 3.0),
                    ],
                ),
                rule(
                    "P4",
                    ClassLabel::DDoS_UDP,
                    vec![
                        Equals("ip.proto", "17"),
                        AtLeast("pair.pkts", 200.0),
                        AtMost("pair.dst_ports", 3.0),
                    ],
                ),
            ],
            hit_confidence: 0.95,
            default_confidence: 0.60,
        }
    }
}

impl ReferenceRules {
    /// The rule that fires for `text`, if any.
    pub fn matching_rule(&self, text: &str) -> Option<&Rule> {
        let pairs = parse_text(text);
        let get = |name: &str| pairs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
        self.rules.iter().find(|r| {
            r.conditions
                .iter()
                .all(|c| get(c.feature()).is_some_and(|v| c.holds(v)))
        })
    }
}

impl Classifier for ReferenceRules {
    fn classify(&self, text: &str) -> Result<(ClassLabel, f64), ClassifyError> {
        Ok(match self.matching_rule(text) {
            Some(rule) => (rule.label, self.hit_confidence),
            None => (ClassLabel::Normal, self.default_confidence),
        })
    }
}

/// Client for a remote sequence classifier.
///
/// Wire contract: `POST {endpoint}/classify` with `{"text": ...}`, answered
/// by `{"label": ..., "confidence": ...}`.
pub struct RemoteModel {
    transport: Arc<dyn HttpTransport>,
    endpoint: String,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    label: String,
    confidence: f64,
}

impl RemoteModel {
    pub fn new(transport: Arc<dyn HttpTransport>, endpoint: impl Into<String>) -> Self {
        Self {
            transport,
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl Classifier for RemoteModel {
    fn classify(&self, text: &str) -> Result<(ClassLabel, f64), ClassifyError> {
        let url = format!("{}/classify", self.endpoint);
        let req = HttpRequest::post_json(&url, &serde_json::json!({ "text": text }));
        let resp = self
            .retry
            .send(self.transport.as_ref(), &req)
            .map_err(|e| ClassifyError::ModelUnavailable(e.to_string()))?;
        let body: ClassifyResponse = resp
            .json(&url)
            .map_err(|e| ClassifyError::ModelUnavailable(e.to_string()))?;
        let label = body.label.parse()?;
        Ok((label, body.confidence.clamp(0.0, 1.0)))
    }
}

/// Uses `primary` and falls back to `fallback` when the primary model is
/// unavailable.
pub struct FallbackClassifier<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: Classifier, F: Classifier> Classifier for FallbackClassifier<P, F> {
    fn classify(&self, text: &str) -> Result<(ClassLabel, f64), ClassifyError> {
        match self.primary.classify(text) {
            Err(ClassifyError::ModelUnavailable(reason)) => {
                log::warn!("classifier unavailable, using fallback: {reason}");
                self.fallback.classify(text)
            }
            other => other,
        }
    }
}
