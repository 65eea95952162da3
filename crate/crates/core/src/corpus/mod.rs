//! Chunking, embedding and session-scoped vector stores.
//!
//! Each modality is chunked along its own natural boundary: protocol logs
//! by uid, the report by section, flow summaries by block, packets by
//! embedding-distance breakpoints. A [`CorpusIndex`] keeps the three most
//! recently used sessions and skips re-embedding identical inputs.

mod chunk;
mod embed;
mod store;

pub use chunk::{
    chunk_flows, chunk_id, chunk_packets_semantic, chunk_protocol_log_text, chunk_protocol_logs, chunk_report,
    normalize_text, percentile, semantic_breaks, Chunk, Level, Modality, SemanticConfig,
};
pub use embed::{
    cosine, dot, l2_normalize, CountingEmbedder, EmbedError, Embedder, HashingEmbedder, RemoteEmbedder, DEFAULT_DIMS,
};
pub use store::{
    ArtifactPaths, Artifacts, CorpusIndex, IngestOutcome, Manifest, SessionEntry, SessionIndexFile, SessionStore,
    DEFAULT_RETAINED, SCHEMA_VERSION,
};
