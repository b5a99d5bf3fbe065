//! Dual-view retrieval engine for procedure-oriented scientific search.
//!
//! Scientific articles are indexed under two views: `paragraph` chunks of the
//! raw body text, and compact `recipe` summaries that concentrate the
//! procedural content (materials, operations, conditions) of each article.
//! A query retrieves from both views, the candidate pools are merged and
//! deduplicated per (paper, stream), a query-aware lexical rerank nudges
//! candidates by token coverage, and the top-K survivors become the evidence
//! handed to a downstream reader.
//!
//! ```text
//!            +-> dense paragraph index -> P candidates -+
//!   query ---+                                          +-> merge -> dedupe -> rerank -> evidence
//!            +-> dense recipe index  --> R candidates --+
//!                       (optional threshold screener)
//! ```
//!
//! Module map:
//! - [`corpus`]: documents, chunking, corpus persistence
//! - [`recipe`]: recipe-summary extraction backends
//! - [`embedding`]: embedding backends, distance, base score
//! - [`index`]: exact dense indexes and the BM25 lexical index
//! - [`retrieval`]: candidate pools, screening, dedupe, evidence selection
//! - [`rerank`]: tokenizer, coverage, lexical rerank, RRF fusion
//! - [`pipeline`]: named pipeline variants for ablation
//! - [`eval`]: recall/nDCG/MRR metrics, TREC-style IO, reports
//! - [`synth`]: seeded synthetic corpus generator
//!
//! Determinism is a hard requirement everywhere: same inputs, same seed, same
//! bytes out. All ranking ties break on ascending item id.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod index;
pub mod pipeline;
pub mod recipe;
pub mod rerank;
pub mod retrieval;
pub mod synth;
pub mod util;

pub use corpus::{
    chunk_document, ingest_documents, load_corpus, persist_corpus, ChunkParams, CorpusStats,
    Document, ParagraphChunk, RecipeSummary,
};
pub use embedding::{
    base_score, distance, EmbedInput, EmbeddingBackend, EmbeddingBackendDescriptor,
    EmbeddingVector, FileEmbeddingBackend, HashedEmbeddingBackend, Metric, RemoteEmbeddingBackend,
};
pub use error::{Error, Result};
pub use eval::{
    collapse_to_papers, evaluate_run, mrr, ndcg_at_k, recall_at_k, run_ablation, AblationCell,
    AblationFailure, AblationGrid, AblationParams, DeltaRow, EvalReport, QrelSet, Query, QuerySet,
    RunResult,
};
pub use index::{
    build_dense_index, build_lexical_index, load_dense_index, load_lexical_index,
    persist_dense_index, persist_lexical_index, Bm25Params, DenseIndex, LexicalIndex, View,
};
pub use pipeline::{run_pipeline, PipelineContext, PipelineVariant};
pub use recipe::{
    extract_recipes, FileRecipeBackend, MockRecipeBackend, RecipeBackend, RemoteRecipeBackend,
};
pub use rerank::{coverage, rerank, rrf_fuse, tokenize, tokenize_stream, RerankConfig, TokenSet};
pub use retrieval::{
    build_item_map, dedupe_pool, merge_pools, retrieve_view, screen_recipes, select_evidence,
    Candidate, CandidatePool, EvidenceContext, ItemMap, ItemRecord, PoolStage, RetrievalParams,
    Stream,
};
pub use synth::{generate, SynthCorpus, SynthParams};
