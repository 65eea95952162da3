use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{cosine, EmbedError, Embedder};
use crate::text::light_stem;

pub const BLEU_MAX_ORDER: usize = 4;
pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_GAMMA: f64 = 0.5;
pub const METEOR_BETA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
}

fn is_joiner(c: char) -> bool {
    matches!(c, '.' | ':' | '/' | '_' | '-' | '\'')
}

/// Metric tokenizer: lowercase, punctuation split into its own tokens,
/// whitespace split. Joiners (`.` `:` `/` `_` `-` `'`) between two
/// alphanumerics stay inside the token, so `10.0.0.2:80` and `tcp/443` are
/// single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
            continue;
        }
        let inner = is_joiner(c)
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if inner {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn ngram_counts(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n == 0 || toks.len() < n {
        return m;
    }
    for w in toks.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

fn clipped_overlap(cand: &HashMap<&[String], usize>, refc: &HashMap<&[String], usize>) -> usize {
    cand.iter().map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0))).sum()
}

/// Sentence BLEU-4 on a 0–100 scale.
///
/// Uniform weights over orders 1..=min(4, |candidate|), clipped counts
/// against the per-n-gram maximum over references, brevity penalty against
/// the closest reference length. A zero precision at order n becomes
/// `1 / (2 · count_n)`. No unigram overlap scores 0.
pub fn bleu(candidate: &str, references: &[&str]) -> Result<f64, MetricError> {
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).filter(|t| !t.is_empty()).collect();
    if refs.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return Ok(0.0);
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap_or(0);
    let order = BLEU_MAX_ORDER.min(c);
    let mut log_sum = 0.0;
    for n in 1..=order {
        let cc = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for rt in &refs {
            for (g, k) in ngram_counts(rt, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        let clipped = clipped_overlap(&cc, &max_ref);
        let total = c - n + 1;
        if clipped == 0 && n == 1 {
            return Ok(0.0);
        }
        let p = if clipped == 0 {
            1.0 / (2.0 * total as f64)
        } else {
            clipped as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(100.0 * bp * (log_sum / order as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

impl Prf {
    const ZERO: Prf = Prf { p: 0.0, r: 0.0, f: 0.0 };
    const FULL: Prf = Prf { p: 100.0, r: 100.0, f: 100.0 };

    fn from_counts(overlap: usize, n_cand: usize, n_ref: usize) -> Prf {
        if overlap == 0 || n_cand == 0 || n_ref == 0 {
            return Prf::ZERO;
        }
        let p = overlap as f64 / n_cand as f64;
        let r = overlap as f64 / n_ref as f64;
        Prf {
            p: 100.0 * p,
            r: 100.0 * r,
            f: 100.0 * 2.0 * p * r / (p + r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub r1: f64,
    pub r2: f64,
    pub rl: f64,
}

/// ROUGE-N precision, recall and F1 (0–100). When neither side has an
/// n-gram of this order the score is 100 for identical token sequences and
/// 0 otherwise.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<Prf, MetricError> {
    let rt = tokenize(reference);
    if rt.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let ct = tokenize(candidate);
    Ok(rouge_n_tokens(&ct, &rt, n))
}

fn rouge_n_tokens(ct: &[String], rt: &[String], n: usize) -> Prf {
    let count = |len: usize| if len >= n { len - n + 1 } else { 0 };
    let (nc, nr) = (count(ct.len()), count(rt.len()));
    if nc == 0 && nr == 0 {
        return if !ct.is_empty() && ct == rt { Prf::FULL } else { Prf::ZERO };
    }
    let overlap = clipped_overlap(&ngram_counts(ct, n), &ngram_counts(rt, n));
    Prf::from_counts(overlap, nc, nr)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L from the longest common subsequence, β = 1.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<Prf, MetricError> {
    let rt = tokenize(reference);
    if rt.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let ct = tokenize(candidate);
    Ok(Prf::from_counts(lcs_len(&ct, &rt), ct.len(), rt.len()))
}

/// ROUGE-1, ROUGE-2 and ROUGE-L F-measures.
pub fn rouge(candidate: &str, reference: &str) -> Result<RougeScores, MetricError> {
    let rt = tokenize(reference);
    if rt.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let ct = tokenize(candidate);
    Ok(RougeScores {
        r1: rouge_n_tokens(&ct, &rt, 1).f,
        r2: rouge_n_tokens(&ct, &rt, 2).f,
        rl: Prf::from_counts(lcs_len(&ct, &rt), ct.len(), rt.len()).f,
    })
}

/// Unigram alignment used by METEOR: candidate index → reference index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub pairs: Vec<Option<usize>>,
    pub matches: usize,
    pub chunks: usize,
}

fn align_stage(keys_c: &[String], keys_r: &[String], pairs: &mut [Option<usize>], used: &mut [bool]) {
    let run = |pairs: &[Option<usize>], used: &[bool], i: usize, j: usize| {
        let mut k = 0;
        while i + k < keys_c.len()
            && j + k < keys_r.len()
            && pairs[i + k].is_none()
            && !used[j + k]
            && keys_c[i + k] == keys_r[j + k]
        {
            k += 1;
        }
        k
    };
    let mut i = 0;
    while i < keys_c.len() {
        if pairs[i].is_some() {
            i += 1;
            continue;
        }
        let prev = if i > 0 { pairs[i - 1] } else { None };
        let best = (0..keys_r.len())
            .filter(|&j| !used[j] && keys_c[i] == keys_r[j])
            .map(|j| (run(pairs, used, i, j), prev.is_some_and(|p| p + 1 == j), j))
            .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(&a.2)));
        match best {
            Some((len, _, j)) => {
                for k in 0..len {
                    pairs[i + k] = Some(j + k);
                    used[j + k] = true;
                }
                i += len;
            }
            None => i += 1,
        }
    }
}

/// Exact matches first, then light-stem matches among the leftovers. Within
/// a stage each unmatched candidate token takes the reference occurrence
/// starting the longest contiguous run, so chunks stay few.
pub fn meteor_alignment(cand: &[String], reference: &[String]) -> Alignment {
    let mut pairs = vec![None; cand.len()];
    let mut used = vec![false; reference.len()];
    align_stage(cand, reference, &mut pairs, &mut used);
    let sc: Vec<String> = cand.iter().map(|t| light_stem(t)).collect();
    let sr: Vec<String> = reference.iter().map(|t| light_stem(t)).collect();
    align_stage(&sc, &sr, &mut pairs, &mut used);
    let matches = pairs.iter().flatten().count();
    let mut chunks = 0;
    for (i, p) in pairs.iter().enumerate() {
        if let Some(j) = p {
            let continues = i > 0 && pairs[i - 1].is_some_and(|q| q + 1 == *j);
            if !continues {
                chunks += 1;
            }
        }
    }
    Alignment { pairs, matches, chunks }
}

/// METEOR (0–100) with exact and stem matchers, α = 0.9, γ = 0.5, β = 3.
pub fn meteor(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    let rt = tokenize(reference);
    if rt.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let ct = tokenize(candidate);
    let a = meteor_alignment(&ct, &rt);
    if a.matches == 0 {
        return Ok(0.0);
    }
    let p = a.matches as f64 / ct.len() as f64;
    let r = a.matches as f64 / rt.len() as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (a.chunks as f64 / a.matches as f64).powf(METEOR_BETA);
    Ok(100.0 * fmean * (1.0 - penalty))
}

/// Tokens scored by BERTScore: metric tokens that carry an alphanumeric.
pub fn bert_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect()
}

/// Greedy-matching BERTScore on a −100..100 scale. Each token is embedded
/// on its own.
pub fn bertscore(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<Prf, MetricError> {
    let rt = bert_tokens(reference);
    if rt.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let ct = bert_tokens(candidate);
    if ct.is_empty() {
        return Ok(Prf::ZERO);
    }
    let mut cache: HashMap<&str, Vec<f32>> = HashMap::new();
    for t in ct.iter().chain(&rt) {
        if cache.contains_key(t.as_str()) {
            continue;
        }
        let v = match embedder.embed(t) {
            Ok(v) => v,
            Err(EmbedError::EmbedderUnavailable(m)) => return Err(MetricError::EmbedderUnavailable(m)),
            Err(e) => return Err(MetricError::EmbedderUnavailable(e.to_string())),
        };
        cache.insert(t, v);
    }
    let sim: Vec<Vec<f64>> = ct
        .iter()
        .map(|c| rt.iter().map(|r| cosine(&cache[c.as_str()], &cache[r.as_str()])).collect())
        .collect();
    let p = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / ct.len() as f64;
    let r = (0..rt.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / rt.len() as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok(Prf {
        p: 100.0 * p,
        r: 100.0 * r,
        f: 100.0 * f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub meteor: f64,
    pub bert_p: f64,
    pub bert_r: f64,
    pub bert_f: f64,
}

impl MetricReport {
    /// All four metric families for one candidate against one reference.
    pub fn score(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<Self, MetricError> {
        let rg = rouge(candidate, reference)?;
        let bs = bertscore(candidate, reference, embedder)?;
        Ok(Self {
            bleu: bleu(candidate, &[reference])?,
            rouge1: rg.r1,
            rouge2: rg.r2,
            rouge_l: rg.rl,
            meteor: meteor(candidate, reference)?,
            bert_p: bs.p,
            bert_r: bs.r,
            bert_f: bs.f,
        })
    }

    /// Field-wise mean; `None` for an empty slice.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            bleu: avg(|m| m.bleu),
            rouge1: avg(|m| m.rouge1),
            rouge2: avg(|m| m.rouge2),
            rouge_l: avg(|m| m.rouge_l),
            meteor: avg(|m| m.meteor),
            bert_p: avg(|m| m.bert_p),
            bert_r: avg(|m| m.bert_r),
            bert_f: avg(|m| m.bert_f),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_keeps_identifiers() {
        assert_eq!(
            tokenize("Host 10.0.0.2:80 sent RST, then stopped."),
            vec!["host", "10.0.0.2:80", "sent", "rst", ",", "then", "stopped", "."]
        );
        assert_eq!(tokenize("tcp/443 (TLS)"), vec!["tcp/443", "(", "tls", ")"]);
    }

    #[test]
    fn rouge_two_tokens_against_three() {
        let s = rouge("a c", "a b c").unwrap();
        assert!((s.r1 - 80.0).abs() < 1e-9);
        assert_eq!(s.r2, 0.0);
        assert!((s.rl - 80.0).abs() < 1e-9);
    }

    #[test]
    fn meteor_stems() {
        let a = meteor_alignment(&tokenize("device resets"), &tokenize("device reset"));
        assert_eq!((a.matches, a.chunks), (2, 1));
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert_eq!(bleu("x", &[" "]), Err(MetricError::EmptyReference));
        assert_eq!(meteor("x", ""), Err(MetricError::EmptyReference));
    }
}
