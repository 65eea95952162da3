//! Tokenizers and small text utilities shared across retrieval, the agent
//! and the metric implementations.

/// Lowercased alphanumeric runs. Used by the hashing embedder.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '.' | ':' | '_' | '/' | '-')
}

fn trim_punct(s: &str) -> &str {
    s.trim_matches(|c: char| matches!(c, '.' | ':' | '_' | '/' | '-'))
}

/// Search tokenizer used by BM25, keyword fallback and lexical reranking.
///
/// Compound tokens stay whole so addresses, `ip:port` pairs and
/// `name:value` features remain searchable; their parts are emitted as well.
/// `10.0.0.2:80` yields `10.0.0.2:80`, `10.0.0.2` and `80`. Dotted pieces
/// that contain letters (`sensor.local`) are also split, numeric ones (IPs)
/// are not.
pub fn search_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split(|c: char| !is_token_char(c)) {
        let token = trim_punct(raw);
        if token.is_empty() {
            continue;
        }
        let token = token.to_lowercase();
        out.push(token.clone());
        let has_colon_or_slash = token.contains([':', '/']);
        let pieces: Vec<&str> = if has_colon_or_slash {
            token.split([':', '/']).map(trim_punct).filter(|p| !p.is_empty()).collect()
        } else {
            vec![token.as_str()]
        };
        for piece in pieces {
            if has_colon_or_slash && piece != token {
                out.push(piece.to_string());
            }
            if piece.contains(['.', '_', '-']) && piece.chars().any(char::is_alphabetic) {
                for sub in piece.split(['.', '_', '-']).filter(|s| !s.is_empty()) {
                    out.push(sub.to_string());
                }
            }
        }
    }
    out
}

pub const STOPWORDS: &[&str] = &[
    "about", "after", "all", "also", "and", "any", "are", "been", "but", "can", "could", "did", "does",
    "during", "each", "for", "from", "had", "has", "have", "how", "into", "its", "many", "more", "much",
    "not", "off", "one", "only", "our", "out", "over", "per", "seen", "such", "than", "that", "the",
    "their", "them", "then", "there", "these", "they", "this", "those", "through", "was", "were", "what",
    "when", "where", "which", "while", "who", "why", "will", "with", "would", "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Search tokens of length at least 3 that are not stopwords.
pub fn content_tokens(text: &str) -> Vec<String> {
    search_tokens(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 3 && !is_stopword(t))
        .collect()
}

/// True for tokens that identify something concrete: numbers, dotted or
/// colon-separated identifiers (IPs, MACs, versions, `ip:port`).
pub fn is_identifier(token: &str) -> bool {
    let has_digit = token.chars().any(|c| c.is_ascii_digit());
    let all_digits = token.chars().all(|c| c.is_ascii_digit());
    all_digits || (has_digit && token.contains(['.', ':']))
}

/// Light suffix stemmer: strips `ing`, `ed`, `es` (after s/x/z/ch/sh) and a
/// plain `s`, keeping at least three characters of stem.
pub fn light_stem(word: &str) -> String {
    let w = word.to_lowercase();
    let n = w.chars().count();
    if n > 5 && w.ends_with("ing") {
        return w[..w.len() - 3].to_string();
    }
    if n > 4 && w.ends_with("ed") {
        return w[..w.len() - 2].to_string();
    }
    if n > 4 && w.ends_with("es") {
        let stem = &w[..w.len() - 2];
        if stem.ends_with(['s', 'x', 'z']) || stem.ends_with("ch") || stem.ends_with("sh") {
            return stem.to_string();
        }
    }
    if n > 3 && w.ends_with('s') && !w.ends_with("ss") {
        return w[..w.len() - 1].to_string();
    }
    w
}

/// Splits prose into sentences at line breaks and at `.`, `!` or `?`
/// followed by whitespace. Dots inside tokens (IPs, decimals) do not split.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let chars: Vec<char> = line.chars().collect();
        let mut start = 0;
        for i in 0..chars.len() {
            let end_mark = matches!(chars[i], '.' | '!' | '?');
            let next_ws = chars.get(i + 1).is_none_or(|c| c.is_whitespace());
            if end_mark && next_ws {
                let s: String = chars[start..=i].iter().collect();
                if !s.trim().is_empty() {
                    out.push(s.trim().to_string());
                }
                start = i + 1;
            }
        }
        let rest: String = chars[start..].iter().collect();
        if !rest.trim().is_empty() {
            out.push(rest.trim().to_string());
        }
    }
    out
}

/// Truncates to at most `max` bytes, backing off to the last word boundary.
pub fn truncate_at_word(text: &str, max: usize) -> String {
    if text.len() <= max {
        return text.to_string();
    }
    let mut cut = max;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    let head = &text[..cut];
    match head.rfind(char::is_whitespace) {
        Some(pos) if pos > 0 => head[..pos].trim_end().to_string(),
        _ => head.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_are_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn search_tokens_keep_addresses_whole() {
        let toks = search_tokens("Flow abc: 10.0.0.2:49152 <-> 10.0.0.1:80 (TCP)");
        for t in ["10.0.0.2:49152", "10.0.0.2", "49152", "10.0.0.1", "80", "tcp", "abc"] {
            assert!(toks.contains(&t.to_string()), "{t} missing from {toks:?}");
        }
        assert!(!toks.contains(&"0".to_string()));
    }

    #[test]
    fn search_tokens_split_named_features() {
        let toks = search_tokens("tcp.dstport:442 sensor.local pkt_count=3");
        for t in ["tcp.dstport:442", "tcp.dstport", "442", "dstport", "sensor.local", "sensor", "pkt_count", "count", "3"] {
            assert!(toks.contains(&t.to_string()), "{t} missing from {toks:?}");
        }
    }

    #[test]
    fn stemmer_cases() {
        assert_eq!(light_stem("resets"), "reset");
        assert_eq!(light_stem("reset"), "reset");
        assert_eq!(light_stem("devices"), "device");
        assert_eq!(light_stem("boxes"), "box");
        assert_eq!(light_stem("scanning"), "scann");
        assert_eq!(light_stem("flagged"), "flagg");
        assert_eq!(light_stem("class"), "class");
        assert_eq!(light_stem("is"), "is");
    }

    #[test]
    fn sentence_split_ignores_dotted_identifiers() {
        let s = sentences("Host 10.0.0.2 sent 3 packets. It reset! Done");
        assert_eq!(s, vec!["Host 10.0.0.2 sent 3 packets.", "It reset!", "Done"]);
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("9.9.9.9"));
        assert!(is_identifier("443"));
        assert!(is_identifier("10.0.0.2:80"));
        assert!(!is_identifier("dns"));
        assert!(!is_identifier("tcp.dstport"));
    }

    #[test]
    fn truncation_backs_off_to_word_boundary() {
        assert_eq!(truncate_at_word("alpha beta gamma", 12), "alpha beta");
        assert_eq!(truncate_at_word("short", 10), "short");
    }
}
