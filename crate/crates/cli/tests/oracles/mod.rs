//! Independent reference implementations the acceptance gate compares the
//! engine against.
//!
//! Everything here is written from the public contracts alone, as naive
//! loops over owned data. Nothing is shared with the library internals, so
//! agreement is evidence of correctness rather than of common code.

use std::collections::{BTreeMap, BTreeSet, HashMap};

// ============================================================================
// Dense scoring
// ============================================================================

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

pub fn base_score(distance: f64) -> f64 {
    1.0 / (1.0 + distance)
}

/// Full scan: score every item, sort by score descending with ascending-id
/// ties, keep `k`.
pub fn dense_rank(items: &[(String, Vec<f64>)], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = items
        .iter()
        .map(|(id, v)| (id.clone(), base_score(cosine_distance(v, query))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

// ============================================================================
// Lexical scoring
// ============================================================================

pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().collect()
}

/// One-function Okapi BM25 with the positive smoothed idf. Documents sharing
/// no query token are omitted; ties break by ascending id.
pub fn bm25_rank(
    docs: &[(String, String)],
    query: &str,
    k1: f64,
    b: f64,
    k: usize,
) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    if docs.is_empty() {
        return Vec::new();
    }
    let doc_tokens: Vec<Vec<String>> = docs.iter().map(|(_, text)| tokens(text)).collect();
    let avgdl = doc_tokens.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let df: HashMap<&str, usize> = {
        let mut df: HashMap<&str, usize> = HashMap::new();
        for toks in &doc_tokens {
            for t in toks.iter().collect::<BTreeSet<_>>() {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        df
    };

    let q: BTreeSet<String> = token_set(query);
    let mut scored: Vec<(String, f64)> = Vec::new();
    for ((id, _), toks) in docs.iter().zip(&doc_tokens) {
        let mut score = 0.0;
        let mut matched = false;
        for t in &q {
            let tf = toks.iter().filter(|x| *x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = df[t.as_str()] as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * toks.len() as f64 / avgdl));
        }
        if matched {
            scored.push((id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

// ============================================================================
// Fusion and rerank ordering
// ============================================================================

/// Reciprocal-rank fusion: `score(id) = sum over lists of 1/(k_rrf + rank)`,
/// ranks 1-based; sorted by score descending, ties ascending id.
pub fn rrf(rankings: &[Vec<String>], k_rrf: usize) -> Vec<(String, f64)> {
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for list in rankings {
        for (i, id) in list.iter().enumerate() {
            *scores.entry(id).or_insert(0.0) += 1.0 / (k_rrf as f64 + i as f64 + 1.0);
        }
    }
    let mut fused: Vec<(String, f64)> =
        scores.into_iter().map(|(id, s)| (id.to_string(), s)).collect();
    fused.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    fused
}

pub fn coverage(query: &str, doc: &str) -> f64 {
    let q = token_set(query);
    let d = token_set(doc);
    q.intersection(&d).count() as f64 / q.len().max(1) as f64
}

/// A candidate as the rerank oracle sees it.
pub struct RerankInput {
    pub item_id: String,
    pub source_rank: usize,
    pub s: f64,
    /// Title and text joined with one space.
    pub doc: String,
}

/// Final ordering under `s + lambda * coverage`, ties on (source_rank, id).
pub fn rerank_order(cands: &[RerankInput], query: &str, lambda: f64) -> Vec<String> {
    let mut scored: Vec<(f64, usize, &str)> = cands
        .iter()
        .map(|c| (c.s + lambda * coverage(query, &c.doc), c.source_rank, c.item_id.as_str()))
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(b.2))
    });
    scored.into_iter().map(|(_, _, id)| id.to_string()).collect()
}

// ============================================================================
// Ranking metrics
// ============================================================================

pub fn recall_at(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    let hits = ranking.iter().take(k).filter(|p| relevant.contains(*p)).count();
    hits as f64 / relevant.len() as f64
}

/// Binary-gain nDCG: DCG sums 1/log2(i+1) over relevant 1-based positions
/// within the cutoff, normalized by the best achievable DCG.
pub fn ndcg_at(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, p)| relevant.contains(*p))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 =
        (0..relevant.len().min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    dcg / ideal
}

pub fn mrr_full(ranking: &[String], relevant: &BTreeSet<String>) -> f64 {
    ranking
        .iter()
        .position(|p| relevant.contains(p))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}
