//! Answer-quality metrics, per-run resource profiling and the two-arm
//! (dense versus hybrid) benchmark.
//!
//! All metrics take plain strings and share one tokenizer ([`tokenize`]).
//! Scores are on a 0–100 scale (BERTScore may go negative).

mod bench;
mod metrics;
mod profile;

pub use bench::{
    arm_name, load_qa_set, markdown_table, parse_qa_jsonl, run_benchmark, AgentResponder, ArmSummary, BenchReport,
    BenchRow, QAPair, Responder, ARMS,
};
pub use metrics::{
    bert_tokens, bertscore, bleu, meteor, meteor_alignment, rouge, rouge_l, rouge_n, tokenize, Alignment, MetricError,
    MetricReport, Prf, RougeScores, BLEU_MAX_ORDER, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA,
};
pub use profile::{whitespace_tokens, GpuProbe, ProfileReport, Profiler};
