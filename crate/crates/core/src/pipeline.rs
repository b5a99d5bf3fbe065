//! End-to-end retrieval variants, from query text to an evidence context.
//!
//! Every variant shares the same skeleton: produce one or two candidate
//! lists, optionally screen/merge/dedupe, score, select top-k. The full
//! pipeline (`reciper`) retrieves from both views, screens recipes when a
//! threshold is set, merges, dedupes per (paper, stream), reranks with
//! query-token coverage, and selects evidence. The remaining variants switch
//! individual steps off so ablations can attribute gains.

use crate::embedding::EmbeddingBackend;
use crate::error::{Error, Result};
use crate::index::{DenseIndex, LexicalIndex};
use crate::rerank::{rrf_fuse, RerankConfig};
use crate::retrieval::{
    dedupe_pool, merge_pools, retrieve_view, screen_recipes, select_evidence, Candidate,
    CandidatePool, EvidenceContext, ItemMap, PoolStage, RetrievalParams,
};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A retrieval strategy. Names (via `Display`/`FromStr`) are the CLI
/// vocabulary: `bm25`, `bm25+dense`, `dense-paragraph`, `dense-recipe`,
/// `rerank-paragraph`, `hybrid`, `hybrid-rrf`, `rerank-both`, `reciper`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PipelineVariant {
    /// Lexical ranking over paragraph chunks.
    Bm25,
    /// Reciprocal-rank fusion of the lexical and dense paragraph lists.
    Bm25Dense,
    /// Dense retrieval over paragraph chunks only.
    DenseParagraph,
    /// Dense retrieval over recipe summaries only.
    DenseRecipe,
    /// Dense paragraph retrieval, deduped and lexically reranked.
    RerankParagraph,
    /// Both views merged and deduped, ranked by the base score.
    Hybrid,
    /// Reciprocal-rank fusion of the two dense lists.
    HybridRrf,
    /// Both views merged without dedup, lexically reranked.
    RerankBoth,
    /// The full pipeline: both views, optional recipe screen, dedupe, rerank.
    Reciper,
}

impl PipelineVariant {
    /// Every variant, in the canonical ablation-table order.
    pub fn all() -> [PipelineVariant; 9] {
        [
            PipelineVariant::Bm25,
            PipelineVariant::Bm25Dense,
            PipelineVariant::DenseParagraph,
            PipelineVariant::DenseRecipe,
            PipelineVariant::RerankParagraph,
            PipelineVariant::Hybrid,
            PipelineVariant::HybridRrf,
            PipelineVariant::RerankBoth,
            PipelineVariant::Reciper,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            PipelineVariant::Bm25 => "bm25",
            PipelineVariant::Bm25Dense => "bm25+dense",
            PipelineVariant::DenseParagraph => "dense-paragraph",
            PipelineVariant::DenseRecipe => "dense-recipe",
            PipelineVariant::RerankParagraph => "rerank-paragraph",
            PipelineVariant::Hybrid => "hybrid",
            PipelineVariant::HybridRrf => "hybrid-rrf",
            PipelineVariant::RerankBoth => "rerank-both",
            PipelineVariant::Reciper => "reciper",
        }
    }
}

impl fmt::Display for PipelineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PipelineVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PipelineVariant::all()
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = PipelineVariant::all().iter().map(|v| v.name()).collect();
                Error::InvalidParam(format!(
                    "unknown variant {s:?} (expected one of {})",
                    names.join("|")
                ))
            })
    }
}

impl TryFrom<String> for PipelineVariant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PipelineVariant> for String {
    fn from(v: PipelineVariant) -> String {
        v.name().to_string()
    }
}

/// Everything a pipeline run needs, borrowed from the caller. Indexes are
/// optional; a variant that needs a missing one fails with `MissingIndex`.
pub struct PipelineContext<'a> {
    pub paragraph_index: Option<&'a DenseIndex>,
    pub recipe_index: Option<&'a DenseIndex>,
    pub lexical_index: Option<&'a LexicalIndex>,
    pub items: &'a ItemMap,
    pub backend: &'a dyn EmbeddingBackend,
    pub params: RetrievalParams,
    pub rerank: RerankConfig,
    /// When set, evidence contexts carry an assembled prompt.
    pub assemble_prompt: bool,
}

fn require<'a, T>(index: Option<&'a T>, which: &str) -> Result<&'a T> {
    index.ok_or_else(|| Error::MissingIndex(which.to_string()))
}

/// Builds candidates from a fused (item_id, score) ranking, resolving
/// metadata through the item map.
fn fused_candidates(fused: &[(String, f64)], items: &ItemMap, limit: usize) -> Result<Vec<Candidate>> {
    fused
        .iter()
        .take(limit)
        .enumerate()
        .map(|(rank, (item_id, score))| {
            let meta = items.get(item_id).ok_or_else(|| {
                Error::InvalidParam(format!("fused id {item_id:?} has no item metadata"))
            })?;
            Ok(Candidate {
                item_id: item_id.clone(),
                paper_id: meta.paper_id.clone(),
                stream: meta.stream,
                title: meta.title.clone(),
                text: meta.text.clone(),
                s: *score,
                o: 0.0,
                s_hat: *score,
                source_rank: rank,
            })
        })
        .collect()
}

/// BM25 candidates over paragraph chunks, in lexical rank order.
fn bm25_candidates(ctx: &PipelineContext<'_>, query_text: &str) -> Result<Vec<Candidate>> {
    let lexical = require(ctx.lexical_index, "lexical")?;
    let hits = lexical.search(query_text, ctx.params.k_c);
    fused_candidates(&hits, ctx.items, ctx.params.k_c)
}

/// Runs one variant for one query and returns its evidence.
pub fn run_pipeline(
    ctx: &PipelineContext<'_>,
    variant: PipelineVariant,
    query_id: &str,
    query_text: &str,
) -> Result<EvidenceContext> {
    ctx.params.validate()?;
    ctx.rerank.validate()?;
    let prompt_query = ctx.assemble_prompt.then_some(query_text);

    // The lexical-only variant never embeds the query.
    let embed_query = || ctx.backend.embed_one(query_id, query_text);
    let paragraph_list = |q: &crate::embedding::EmbeddingVector| -> Result<Vec<Candidate>> {
        retrieve_view(require(ctx.paragraph_index, "paragraph")?, q, &ctx.params, ctx.items)
    };
    let recipe_list = |q: &crate::embedding::EmbeddingVector| -> Result<Vec<Candidate>> {
        retrieve_view(require(ctx.recipe_index, "recipe")?, q, &ctx.params, ctx.items)
    };

    let pool: CandidatePool = match variant {
        PipelineVariant::Bm25 => {
            let mut pool = merge_pools(query_id, bm25_candidates(ctx, query_text)?, vec![]);
            pool.finalize_without_rerank()?;
            pool
        }
        PipelineVariant::Bm25Dense => {
            let q = embed_query()?;
            let dense_ids: Vec<String> =
                paragraph_list(&q)?.into_iter().map(|c| c.item_id).collect();
            let lexical_ids: Vec<String> =
                bm25_candidates(ctx, query_text)?.into_iter().map(|c| c.item_id).collect();
            let fused = rrf_fuse(&[lexical_ids, dense_ids], ctx.rerank.k_rrf)?;
            let mut pool = merge_pools(
                query_id,
                fused_candidates(&fused, ctx.items, ctx.params.k_c)?,
                vec![],
            );
            pool.finalize_without_rerank()?;
            pool
        }
        PipelineVariant::DenseParagraph => {
            let q = embed_query()?;
            let mut pool = merge_pools(query_id, paragraph_list(&q)?, vec![]);
            pool.finalize_without_rerank()?;
            pool
        }
        PipelineVariant::DenseRecipe => {
            let q = embed_query()?;
            let mut pool = merge_pools(query_id, vec![], recipe_list(&q)?);
            pool.finalize_without_rerank()?;
            pool
        }
        PipelineVariant::RerankParagraph => {
            let q = embed_query()?;
            let mut pool = dedupe_pool(merge_pools(query_id, paragraph_list(&q)?, vec![]))?;
            pool.rerank(query_text, &ctx.rerank)?;
            pool
        }
        PipelineVariant::Hybrid => {
            let q = embed_query()?;
            let mut pool =
                dedupe_pool(merge_pools(query_id, paragraph_list(&q)?, recipe_list(&q)?))?;
            pool.finalize_without_rerank()?;
            pool
        }
        PipelineVariant::HybridRrf => {
            let q = embed_query()?;
            let p_ids: Vec<String> = paragraph_list(&q)?.into_iter().map(|c| c.item_id).collect();
            let r_ids: Vec<String> = recipe_list(&q)?.into_iter().map(|c| c.item_id).collect();
            let fused = rrf_fuse(&[p_ids, r_ids], ctx.rerank.k_rrf)?;
            let mut pool = merge_pools(
                query_id,
                fused_candidates(&fused, ctx.items, ctx.params.k_c)?,
                vec![],
            );
            pool.finalize_without_rerank()?;
            pool
        }
        PipelineVariant::RerankBoth => {
            let q = embed_query()?;
            let mut pool = merge_pools(query_id, paragraph_list(&q)?, recipe_list(&q)?);
            pool.rerank(query_text, &ctx.rerank)?;
            pool
        }
        PipelineVariant::Reciper => {
            let q = embed_query()?;
            let paragraphs = paragraph_list(&q)?;
            let mut recipes = recipe_list(&q)?;
            if let Some(tau) = ctx.params.tau {
                recipes = screen_recipes(recipes, tau, require(ctx.recipe_index, "recipe")?)?;
            }
            let mut pool = dedupe_pool(merge_pools(query_id, paragraphs, recipes))?;
            pool.rerank(query_text, &ctx.rerank)?;
            pool
        }
    };

    debug_assert_eq!(pool.stage, PoolStage::Reranked);
    select_evidence(&pool, ctx.params.k, prompt_query)
}

// ============================================================================
// Tests
// ============================================================================
