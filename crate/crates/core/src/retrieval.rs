//! Candidate pools: per-view retrieval, recipe screening, merging,
//! deduplication, and evidence selection.
//!
//! A pool moves through explicit stages (merged -> deduped -> reranked) and
//! each operation checks the stage it requires, so pipeline variants cannot
//! silently skip a step. Deduplication keys on (paper_id, stream): a paper
//! may appear once per stream in the deduped pool, never twice within one.

use crate::embedding::{cosine_similarity, EmbeddingVector};
use crate::error::{Error, Result};
use crate::index::{DenseIndex, View};
use crate::rerank::RerankConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Which view produced a candidate. Same two values as [`View`]; `stream` is
/// the candidate-side name.
pub type Stream = View;

/// One retrievable item's metadata, keyed by item id in an [`ItemMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub paper_id: String,
    pub stream: Stream,
    pub title: String,
    pub text: String,
}

/// item_id -> metadata for every chunk and recipe in the corpus.
pub type ItemMap = BTreeMap<String, ItemRecord>;

/// Builds the item lookup from corpus parts.
pub fn build_item_map(
    chunks: &[crate::corpus::ParagraphChunk],
    recipes: &[crate::corpus::RecipeSummary],
) -> ItemMap {
    let mut map = ItemMap::new();
    for c in chunks {
        map.insert(
            c.chunk_id.clone(),
            ItemRecord {
                paper_id: c.paper_id.clone(),
                stream: Stream::Paragraph,
                title: c.title.clone(),
                text: c.text.clone(),
            },
        );
    }
    for r in recipes {
        map.insert(
            r.recipe_id.clone(),
            ItemRecord {
                paper_id: r.paper_id.clone(),
                stream: Stream::Recipe,
                title: r.title.clone(),
                text: r.text.clone(),
            },
        );
    }
    map
}

/// A scored retrieval candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item_id: String,
    pub paper_id: String,
    pub stream: Stream,
    pub title: String,
    pub text: String,
    /// Base similarity score from dense retrieval.
    pub s: f64,
    /// Query-token coverage; 0 until reranked.
    pub o: f64,
    /// Final score; equals `s` until reranked.
    pub s_hat: f64,
    /// 0-based rank in the view list that produced this candidate.
    pub source_rank: usize,
}

/// Pipeline position of a [`CandidatePool`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolStage {
    Merged,
    Deduped,
    Reranked,
}

/// A query's candidates at one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query_id: String,
    pub stage: PoolStage,
    pub candidates: Vec<Candidate>,
}

/// Retrieval-side knobs. `k_c` is the per-view candidate depth, `k` the
/// evidence size, `tau` the optional recipe-screener threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub k_c: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams { k_c: 50, k: 10, tau: None }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidParam("k must be >= 1".into()));
        }
        if self.k_c < self.k {
            return Err(Error::InvalidParam(format!(
                "k_c ({}) must be >= k ({})",
                self.k_c, self.k
            )));
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::InvalidParam(format!(
                    "tau must be in (0, 1], got {tau}"
                )));
            }
        }
        Ok(())
    }
}

/// The evidence handed to a downstream reader: top-k candidates, optionally
/// with an assembled prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceContext {
    pub query_id: String,
    pub items: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembled_prompt: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvidenceItemRecord {
    item_id: String,
    paper_id: String,
    stream: Stream,
    s: f64,
    o: f64,
    s_hat: f64,
    /// 1-based evidence rank.
    rank: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvidenceRecord {
    query_id: String,
    items: Vec<EvidenceItemRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    assembled_prompt: Option<String>,
}

impl EvidenceContext {
    /// Serializes to the one-line JSON evidence format:
    /// `{"query_id", "items": [{item_id, paper_id, stream, s, o, s_hat, rank}], "assembled_prompt"?}`.
    pub fn to_jsonl(&self) -> Result<String> {
        let record = EvidenceRecord {
            query_id: self.query_id.clone(),
            items: self
                .items
                .iter()
                .enumerate()
                .map(|(i, c)| EvidenceItemRecord {
                    item_id: c.item_id.clone(),
                    paper_id: c.paper_id.clone(),
                    stream: c.stream,
                    s: c.s,
                    o: c.o,
                    s_hat: c.s_hat,
                    rank: i + 1,
                })
                .collect(),
            assembled_prompt: self.assembled_prompt.clone(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    /// Papers in evidence order, first occurrence only.
    pub fn paper_ranking(&self) -> Vec<(String, f64)> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.items {
            if seen.insert(c.paper_id.as_str()) {
                out.push((c.paper_id.clone(), c.s_hat));
            }
        }
        out
    }
}

/// Retrieves the top `k_c` candidates from one dense view.
///
/// Candidates carry the view's stream, their 0-based source rank, base score
/// `s`, `o = 0`, and `s_hat = s`. Item metadata comes from `items`; an index
/// id missing from the map is a corpus/index inconsistency and fails.
pub fn retrieve_view(
    index: &DenseIndex,
    query_vec: &EmbeddingVector,
    params: &RetrievalParams,
    items: &ItemMap,
) -> Result<Vec<Candidate>> {
    params.validate()?;
    let hits = index.search(query_vec, params.k_c)?;
    hits.into_iter()
        .enumerate()
        .map(|(rank, hit)| {
            let meta = items.get(&hit.item_id).ok_or_else(|| {
                Error::InvalidParam(format!(
                    "index entry {:?} has no item metadata",
                    hit.item_id
                ))
            })?;
            Ok(Candidate {
                item_id: hit.item_id,
                paper_id: hit.paper_id,
                stream: index.view,
                title: meta.title.clone(),
                text: meta.text.clone(),
                s: hit.s,
                o: 0.0,
                s_hat: hit.s,
                source_rank: rank,
            })
        })
        .collect()
}

/// Greedy diversity screen over recipe candidates, in rank order.
///
/// The first candidate is always kept; each later one is dropped when its
/// embedding cosine similarity to ANY kept candidate exceeds `tau` (strictly).
/// Survivors keep their original source ranks. With `tau = 1.0` only exact
/// duplicates can be dropped, since clamped cosine never exceeds 1.
pub fn screen_recipes(
    candidates: Vec<Candidate>,
    tau: f64,
    index: &DenseIndex,
) -> Result<Vec<Candidate>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParam(format!("tau must be in (0, 1], got {tau}")));
    }
    let vector_of = |id: &str| -> Result<&EmbeddingVector> {
        index
            .entries
            .binary_search_by(|e| e.item_id.as_str().cmp(id))
            .map(|i| &index.entries[i].vector)
            .map_err(|_| Error::InvalidParam(format!("candidate {id:?} not in recipe index")))
    };
    let mut kept: Vec<Candidate> = Vec::new();
    'outer: for cand in candidates {
        let v = vector_of(&cand.item_id)?;
        for prior in &kept {
            let sim = cosine_similarity(vector_of(&prior.item_id)?, v)?;
            if sim > tau {
                continue 'outer;
            }
        }
        kept.push(cand);
    }
    Ok(kept)
}

/// Concatenates the paragraph and recipe candidate lists into a merged pool.
pub fn merge_pools(
    query_id: &str,
    paragraph: Vec<Candidate>,
    recipe: Vec<Candidate>,
) -> CandidatePool {
    let mut candidates = paragraph;
    candidates.extend(recipe);
    CandidatePool {
        query_id: query_id.to_string(),
        stage: PoolStage::Merged,
        candidates,
    }
}

/// Keeps the best candidate per (paper_id, stream): maximal `s`, ties to the
/// lower source rank, then ascending item id. Cross-stream duplicates of a
/// paper survive. Idempotent. Output is sorted by (s desc, source_rank,
/// item_id).
pub fn dedupe_pool(pool: CandidatePool) -> Result<CandidatePool> {
    if pool.stage == PoolStage::Reranked {
        return Err(Error::InvalidParam(
            "dedupe must run before rerank (pool already reranked)".into(),
        ));
    }
    let mut best: BTreeMap<(String, Stream), Candidate> = BTreeMap::new();
    for c in pool.candidates {
        let key = (c.paper_id.clone(), c.stream);
        match best.get(&key) {
            Some(cur) => {
                let replace = c.s > cur.s
                    || (c.s == cur.s
                        && (c.source_rank < cur.source_rank
                            || (c.source_rank == cur.source_rank && c.item_id < cur.item_id)));
                if replace {
                    best.insert(key, c);
                }
            }
            None => {
                best.insert(key, c);
            }
        }
    }
    let mut candidates: Vec<Candidate> = best.into_values().collect();
    candidates.sort_by(|a, b| {
        b.s.partial_cmp(&a.s)
            .expect("scores are finite")
            .then(a.source_rank.cmp(&b.source_rank))
            .then(a.item_id.cmp(&b.item_id))
    });
    Ok(CandidatePool {
        query_id: pool.query_id,
        stage: PoolStage::Deduped,
        candidates,
    })
}

impl CandidatePool {
    /// Applies the lexical rerank and advances the stage.
    pub fn rerank(&mut self, query: &str, cfg: &RerankConfig) -> Result<()> {
        if self.stage == PoolStage::Reranked {
            return Err(Error::InvalidParam("pool already reranked".into()));
        }
        crate::rerank::rerank(&mut self.candidates, query, cfg)?;
        self.stage = PoolStage::Reranked;
        Ok(())
    }

    /// Finalizes scores without a rerank: `s_hat = s`, coverage untouched at
    /// 0, candidates sorted by (s_hat desc, source_rank, item_id). Used by
    /// variants that skip the lexical rerank.
    pub fn finalize_without_rerank(&mut self) -> Result<()> {
        if self.stage == PoolStage::Reranked {
            return Err(Error::InvalidParam("pool already reranked".into()));
        }
        for c in &mut self.candidates {
            c.s_hat = c.s;
        }
        self.candidates.sort_by(|a, b| {
            b.s_hat
                .partial_cmp(&a.s_hat)
                .expect("scores are finite")
                .then(a.source_rank.cmp(&b.source_rank))
                .then(a.item_id.cmp(&b.item_id))
        });
        self.stage = PoolStage::Reranked;
        Ok(())
    }
}

/// Takes the top `k` of a reranked pool as evidence.
///
/// Ordering: `s_hat` descending, ties to higher `s`, then ascending item id.
/// When `prompt_query` is given, a prompt with the query and numbered
/// evidence blocks is assembled.
pub fn select_evidence(
    pool: &CandidatePool,
    k: usize,
    prompt_query: Option<&str>,
) -> Result<EvidenceContext> {
    if pool.stage != PoolStage::Reranked {
        return Err(Error::InvalidParam(format!(
            "evidence selection needs a reranked pool, got stage {:?}",
            pool.stage
        )));
    }
    if k < 1 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    let mut items = pool.candidates.clone();
    items.sort_by(|a, b| {
        b.s_hat
            .partial_cmp(&a.s_hat)
            .expect("scores are finite")
            .then(b.s.partial_cmp(&a.s).expect("scores are finite"))
            .then(a.item_id.cmp(&b.item_id))
    });
    items.truncate(k);

    let assembled_prompt = prompt_query.map(|q| {
        let mut p = String::new();
        let _ = writeln!(p, "Use the numbered evidence to answer the question.");
        let _ = writeln!(p);
        let _ = writeln!(p, "Question: {q}");
        let _ = writeln!(p);
        for (i, c) in items.iter().enumerate() {
            let _ = writeln!(p, "[{}] paper={} source={} {}", i + 1, c.paper_id, c.stream, c.title);
            let _ = writeln!(p, "{}", c.text);
            let _ = writeln!(p);
        }
        p
    });

    Ok(EvidenceContext {
        query_id: pool.query_id.clone(),
        items,
        assembled_prompt,
    })
}

// ============================================================================
// Tests
// ============================================================================
