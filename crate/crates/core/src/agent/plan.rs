use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::retrieval::EvidenceBundle;
use crate::text::{is_identifier, light_stem, search_tokens};

pub const PROTOCOL_TOKENS: &[&str] = &[
    "arp", "coap", "dhcp", "dns", "ftp", "http", "https", "icmp", "modbus", "mqtt", "ntp", "ssh", "ssl", "tcp",
    "telnet", "tls", "udp",
];

/// Stemmed words that refer to the capture itself.
pub const CAPTURE_WORDS: &[&str] = &[
    "address", "capture", "connection", "conversation", "device", "flow", "frame", "host", "ip", "ips", "packet", "pcap",
    "session", "traffic",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Answer,
    RefineRetrieval(String),
    WebLookup(String),
}

/// Query expansions applied when refining, keyed by stemmed query word.
const EXPANSIONS: &[(&str, &[&str])] = &[
    ("reset", &["RST", "reset"]),
    ("rst", &["RST", "reset"]),
    ("syn", &["SYN", "handshake"]),
    ("handshake", &["SYN", "handshake"]),
    ("flood", &["SYN", "flood"]),
    ("scan", &["port", "scan", "REJ"]),
    ("reject", &["REJ", "RejectedOnConnect"]),
    ("publish", &["publish", "topic"]),
    ("topic", &["topic"]),
    ("lookup", &["query"]),
    ("resolve", &["query", "answers"]),
    ("malicious", &["malicious", "abuse"]),
    ("vendor", &["Vendors"]),
    ("manufacturer", &["Vendors"]),
    ("packet", &["Packets"]),
    ("byte", &["bytes"]),
];

/// Query tokens that tie the question to this capture: identifiers,
/// protocol names and uids that occur in the corpus vocabulary.
pub fn capture_tokens(query: &str, vocabulary: &HashSet<String>, uids: &HashSet<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in search_tokens(query) {
        let scoped = is_identifier(&t) || PROTOCOL_TOKENS.contains(&t.as_str()) || uids.contains(&t);
        if scoped && vocabulary.contains(&t) && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Dotted or colon addresses in the query (IPs, MACs, host:port) that
/// occur nowhere in the corpus.
pub fn unknown_addresses(query: &str, vocabulary: &HashSet<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in search_tokens(query) {
        let address = t.chars().any(|c| c.is_ascii_digit()) && t.contains(['.', ':']);
        if address && !vocabulary.contains(&t) && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// True when the question talks about the capture ("how many flows are in
/// this capture?") even without naming a concrete identifier.
pub fn mentions_capture(query: &str) -> bool {
    search_tokens(query)
        .iter()
        .any(|t| CAPTURE_WORDS.contains(&light_stem(t).as_str()))
}

/// Terms added on refinement: expansions of query words, then the
/// capture-scoped tokens.
pub fn refinement_terms(query: &str, scoped: &[String]) -> String {
    let mut added: Vec<String> = Vec::new();
    let mut push = |t: &str| {
        if !added.iter().any(|a| a.eq_ignore_ascii_case(t)) {
            added.push(t.to_string());
        }
    };
    for t in search_tokens(query) {
        let stem = light_stem(&t);
        for (k, vs) in EXPANSIONS {
            if *k == stem {
                vs.iter().for_each(|v| push(v));
            }
        }
    }
    for t in scoped {
        push(t);
    }
    added.join(" ")
}

/// Top score of the bundle's final ordering stage.
pub fn top_score(bundle: &EvidenceBundle) -> f64 {
    bundle.ranked.first().map_or(0.0, |r| r.candidate.final_score())
}

/// Policy table:
///
/// | top score | capture-scoped | already refined | action |
/// |---|---|---|---|
/// | ≥ τ | any | any | Answer |
/// | < τ | yes | no | RefineRetrieval |
/// | < τ | yes | yes | Answer |
/// | < τ | no | any | WebLookup |
///
/// A question that mentions the capture itself counts as capture-scoped.
pub fn plan(
    query: &str,
    bundle: &EvidenceBundle,
    tau: f64,
    vocabulary: &HashSet<String>,
    uids: &HashSet<String>,
    refined: bool,
) -> Action {
    if top_score(bundle) >= tau {
        return Action::Answer;
    }
    let scoped = capture_tokens(query, vocabulary, uids);
    if scoped.is_empty() && !mentions_capture(query) {
        return Action::WebLookup("no capture-specific terms; evidence below floor".into());
    }
    if refined {
        return Action::Answer;
    }
    let terms = refinement_terms(query, &scoped);
    if terms.is_empty() {
        Action::Answer
    } else {
        Action::RefineRetrieval(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::RetrievalMode;

    fn empty() -> EvidenceBundle {
        EvidenceBundle {
            query: String::new(),
            mode: RetrievalMode::Hybrid,
            session_id: "s".into(),
            ranked: vec![],
            degraded: false,
        }
    }

    #[test]
    fn unknown_address_tokens() {
        let vocab: HashSet<String> = ["10.0.0.9", "tcp", "1883"].iter().map(|s| s.to_string()).collect();
        assert_eq!(unknown_addresses("what did 192.168.7.7 send to 10.0.0.9", &vocab), ["192.168.7.7"]);
        assert!(unknown_addresses("traffic on port 8080 from 10.0.0.9", &vocab).is_empty());
    }

    #[test]
    fn policy_rows() {
        let vocab: HashSet<String> = ["10.0.0.9", "tcp", "flow"].iter().map(|s| s.to_string()).collect();
        let none = HashSet::new();
        assert_eq!(
            plan("resets from 10.0.0.9", &empty(), 0.15, &vocab, &none, false),
            Action::RefineRetrieval("RST reset 10.0.0.9".into())
        );
        assert!(matches!(
            plan("What is the default MQTT port?", &empty(), 0.15, &vocab, &none, false),
            Action::WebLookup(_)
        ));
        assert_eq!(plan("resets from 10.0.0.9", &empty(), 0.15, &vocab, &none, true), Action::Answer);
        assert_eq!(
            plan("How many flows are in this capture?", &empty(), 0.15, &vocab, &none, false),
            Action::Answer
        );
    }
}
