use std::collections::{HashMap, HashSet};

/// Okapi BM25 over pre-tokenized documents.
///
/// `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`; each distinct query
/// term contributes `idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avglen))`.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    doc_len: Vec<usize>,
    avg_len: f64,
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build(docs: &[Vec<String>], k1: f64, b: f64) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            doc_len.push(d.len());
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in d {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t.to_string()).or_default().push((i, n));
            }
        }
        let total: usize = doc_len.iter().sum();
        let avg_len = if docs.is_empty() { 0.0 } else { total as f64 / docs.len() as f64 };
        Self {
            k1,
            b,
            doc_len,
            avg_len,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_len.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_len.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores for every document (zero where no query term occurs).
    pub fn scores(&self, query: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.len()];
        let mut seen = HashSet::new();
        for term in query {
            if !seen.insert(term.as_str()) {
                continue;
            }
            let Some(post) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(doc, tf) in post {
                let tf = f64::from(tf);
                let norm = if self.avg_len > 0.0 {
                    1.0 - self.b + self.b * self.doc_len[doc] as f64 / self.avg_len
                } else {
                    1.0
                };
                scores[doc] += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
            }
        }
        scores
    }

    /// Top `k` documents with positive score, descending; ties by index.
    pub fn search(&self, query: &[String], k: usize) -> Vec<(usize, f64)> {
        let mut hits: Vec<(usize, f64)> = self
            .scores(query)
            .into_iter()
            .enumerate()
            .filter(|(_, s)| *s > 0.0)
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn tf_breaks_tie() {
        let idx = Bm25Index::build(&[toks("dns query dns"), toks("modbus write"), toks("dns response")], 1.2, 0.75);
        let hits = idx.search(&toks("dns"), 10);
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 2]);
        // N=3, df=2: idf = ln(1 + 1.5/2.5); avglen = 7/3.
        let idf = (1.0f64 + 1.5 / 2.5).ln();
        let d1 = idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * 3.0 / (7.0 / 3.0)));
        assert!((hits[0].1 - d1).abs() < 1e-12);
        assert!(idx.search(&toks("absent"), 10).is_empty());
        let one = Bm25Index::build(&[toks("only doc")], 1.2, 0.75);
        assert!(one.search(&toks("only doc"), 1)[0].1 > 0.0);
    }
}
