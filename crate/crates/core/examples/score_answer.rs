//! Scores a candidate answer against a reference with BLEU, ROUGE, METEOR
//! and BERTScore (hashing embedder).
//!
//! cargo run --example score_answer -- "candidate" "reference"

use capsight::corpus::HashingEmbedder;
use capsight::eval::{tokenize, MetricReport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cand = args
        .next()
        .unwrap_or_else(|| "The SYN flood came from 52.0.0.1 and hit 10.0.0.10 on tcp/80.".into());
    let reference = args
        .next()
        .unwrap_or_else(|| "The DDoS_TCP rows come from 52.0.0.1 targeting 10.0.0.10 on tcp/80.".into());
    println!("candidate tokens: {:?}", tokenize(&cand));
    println!("reference tokens: {:?}", tokenize(&reference));
    let m = MetricReport::score(&cand, &reference, &HashingEmbedder::default())?;
    println!("BLEU    {:.2}", m.bleu);
    println!("ROUGE   r1 {:.2}  r2 {:.2}  rL {:.2}", m.rouge1, m.rouge2, m.rouge_l);
    println!("METEOR  {:.2}", m.meteor);
    println!("BERT    p {:.2}  r {:.2}  f {:.2}", m.bert_p, m.bert_r, m.bert_f);
    Ok(())
}
