use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::chat::UNAVAILABLE;
use crate::text::{content_tokens, is_identifier, search_tokens, sentences};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSupport {
    pub sentence: String,
    pub supported: bool,
    pub best_chunk_id: Option<String>,
    pub overlap: f64,
    /// Identifiers in the sentence found in no passage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_identifiers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessVerdict {
    pub per_sentence: Vec<SentenceSupport>,
    pub passed: bool,
}

impl FaithfulnessVerdict {
    pub fn supported_sentences(&self) -> impl Iterator<Item = &SentenceSupport> {
        self.per_sentence.iter().filter(|s| s.supported)
    }
}

fn is_boilerplate(sentence: &str) -> bool {
    sentence.trim() == UNAVAILABLE || content_tokens(sentence).is_empty() && !search_tokens(sentence).iter().any(|t| is_identifier(t))
}

/// Checks each draft sentence against `(id, text)` passages.
///
/// A sentence is supported when the best passage covers at least `theta`
/// of its distinct content tokens and every numeric or dotted identifier
/// in it occurs verbatim as a token of some passage. Sentences with no
/// content tokens and no identifiers are boilerplate and always pass.
pub fn faithfulness_check(draft: &str, passages: &[(&str, &str)], theta: f64) -> FaithfulnessVerdict {
    let passage_tokens: Vec<HashSet<String>> = passages
        .iter()
        .map(|(_, t)| search_tokens(t).into_iter().collect())
        .collect();
    let mut per_sentence = Vec::new();
    for s in sentences(draft) {
        if is_boilerplate(&s) {
            per_sentence.push(SentenceSupport {
                sentence: s,
                supported: true,
                best_chunk_id: None,
                overlap: 1.0,
                missing_identifiers: Vec::new(),
            });
            continue;
        }
        let toks: HashSet<String> = content_tokens(&s).into_iter().collect();
        let mut best = (0.0f64, None::<usize>);
        for (i, pt) in passage_tokens.iter().enumerate() {
            let frac = if toks.is_empty() {
                1.0
            } else {
                toks.iter().filter(|t| pt.contains(*t)).count() as f64 / toks.len() as f64
            };
            if frac > best.0 || best.1.is_none() {
                best = (frac, Some(i));
            }
        }
        let mut missing: Vec<String> = search_tokens(&s)
            .into_iter()
            .filter(|t| is_identifier(t))
            .filter(|t| !passage_tokens.iter().any(|pt| pt.contains(t)))
            .collect();
        missing.sort();
        missing.dedup();
        let supported = best.1.is_some() && best.0 >= theta && missing.is_empty();
        per_sentence.push(SentenceSupport {
            sentence: s,
            supported,
            best_chunk_id: best.1.map(|i| passages[i].0.to_string()),
            overlap: best.0,
            missing_identifiers: missing,
        });
    }
    let passed = per_sentence.iter().all(|s| s.supported);
    FaithfulnessVerdict { per_sentence, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verbatim_passes_and_foreign_ip_fails() {
        let chunk = "Flow a: 10.0.0.5:40000 <-> 10.0.0.9:80 (TCP). Signature: MidstreamReset";
        let ok = faithfulness_check(chunk, &[("c1", chunk)], 0.25);
        assert!(ok.passed);
        let bad = faithfulness_check("The host 9.9.9.9 reset the flow.", &[("c1", chunk)], 0.25);
        assert!(!bad.passed);
        assert_eq!(bad.per_sentence[0].missing_identifiers, vec!["9.9.9.9".to_string()]);
        assert!(faithfulness_check("", &[], 0.25).passed);
    }
}
