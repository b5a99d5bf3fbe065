//! Query-aware lexical rerank and rank fusion.
//!
//! The rerank is deliberately cheap: one tokenizer shared with the lexical
//! index, a set-overlap coverage term, and a linear nudge
//! `s_hat = s + lambda * coverage`. Reciprocal-rank fusion is provided for
//! the fusion pipeline variants.

use crate::error::{Error, Result};
use crate::retrieval::Candidate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;

/// Normalized token set; deterministic iteration order.
pub type TokenSet = BTreeSet<String>;

/// Rerank and fusion knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    /// Coverage weight in `s_hat = s + lambda * coverage`.
    pub lambda: f64,
    /// Rank offset in reciprocal-rank fusion.
    pub k_rrf: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig { lambda: 0.1, k_rrf: 60 }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidParam(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.k_rrf == 0 {
            return Err(Error::InvalidParam("k_rrf must be >= 1".into()));
        }
        Ok(())
    }
}

/// The system-wide token stream: lowercase, split on non-alphanumeric runs.
///
/// Duplicates are kept so the lexical index sees real term frequencies and
/// token-count document lengths.
pub fn tokenize_stream(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Set view of [`tokenize_stream`], used by coverage.
pub fn tokenize(text: &str) -> TokenSet {
    tokenize_stream(text).into_iter().collect()
}

/// Fraction of query tokens present in the document token set:
/// `|Q intersect D| / max(|Q|, 1)`. An empty query covers nothing.
pub fn coverage(query_tokens: &TokenSet, doc_tokens: &TokenSet) -> f64 {
    if query_tokens.is_empty() {
        return 0.0;
    }
    let hits = query_tokens.intersection(doc_tokens).count();
    hits as f64 / query_tokens.len() as f64
}

/// Applies the coverage nudge to every candidate and re-sorts.
///
/// Each candidate's document side is `title + " " + text`. After this call
/// `o` holds the coverage, `s_hat = s + lambda * o`, and candidates are
/// ordered by `s_hat` descending with ties on (source_rank, item_id).
/// With `lambda = 0` the ordering by score is unchanged.
pub fn rerank(candidates: &mut [Candidate], query: &str, cfg: &RerankConfig) -> Result<()> {
    cfg.validate()?;
    let q = tokenize(query);
    for c in candidates.iter_mut() {
        let doc_text = format!("{} {}", c.title, c.text);
        let d = tokenize(&doc_text);
        c.o = coverage(&q, &d);
        c.s_hat = c.s + cfg.lambda * c.o;
    }
    candidates.sort_by(|a, b| {
        b.s_hat
            .partial_cmp(&a.s_hat)
            .expect("scores are finite")
            .then(a.source_rank.cmp(&b.source_rank))
            .then(a.item_id.cmp(&b.item_id))
    });
    Ok(())
}

/// Reciprocal-rank fusion over ranked id lists.
///
/// `score(id) = sum over lists of 1/(k_rrf + rank)` with ranks starting at 1.
/// Per-id contributions are summed in sorted order, so the result is exactly
/// invariant under permutation of the input lists. Output is sorted by score
/// descending, ties by ascending id.
pub fn rrf_fuse(rankings: &[Vec<String>], k_rrf: usize) -> Result<Vec<(String, f64)>> {
    if k_rrf == 0 {
        return Err(Error::InvalidParam("k_rrf must be >= 1".into()));
    }
    let mut contribs: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for list in rankings {
        for (i, id) in list.iter().enumerate() {
            contribs
                .entry(id.as_str())
                .or_default()
                .push(1.0 / (k_rrf + i + 1) as f64);
        }
    }
    let mut fused: Vec<(String, f64)> = contribs
        .into_iter()
        .map(|(id, mut parts)| {
            parts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            (id.to_string(), parts.iter().sum::<f64>())
        })
        .collect();
    fused.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then(a.0.cmp(&b.0))
    });
    Ok(fused)
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::Stream;
    use proptest::prelude::*;

    fn cand(item_id: &str, s: f64, text: &str) -> Candidate {
        Candidate {
            item_id: item_id.into(),
            paper_id: format!("paper-{item_id}"),
            stream: Stream::Paragraph,
            title: String::new(),
            text: text.into(),
            s,
            o: 0.0,
            s_hat: s,
            source_rank: 0,
        }
    }

    #[test]
    fn tokenizer_lowercases_and_splits_on_non_alphanumerics() {
        let t = tokenize("TiO2 thin-film anneal @ 450C");
        let want: TokenSet =
            ["tio2", "thin", "film", "anneal", "450c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(t, want);
        assert!(tokenize("  \t--@@!!  ").is_empty());
    }

    #[test]
    fn token_stream_keeps_duplicates_in_order() {
        assert_eq!(
            tokenize_stream("Mix, mix, then MIX again"),
            vec!["mix", "mix", "then", "mix", "again"]
        );
    }

    #[test]
    fn coverage_counts_query_token_hits() {
        let q: TokenSet = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let d: TokenSet = ["b", "c", "d"].iter().map(|s| s.to_string()).collect();
        assert!((coverage(&q, &d) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(coverage(&TokenSet::new(), &d), 0.0);
        assert_eq!(coverage(&q, &TokenSet::new()), 0.0);
    }

    /// A fully covered candidate at s = 0.80 overtakes a barely covered one
    /// at s = 0.82 under lambda = 0.1: 0.90 vs 0.85.
    #[test]
    fn coverage_nudge_flips_close_scores() {
        // First candidate covers all of "alpha beta gamma"; second covers
        // one of three query tokens.
        let mut pool = vec![
            cand("x2", 0.82, "alpha unrelated filler"),
            cand("x1", 0.80, "alpha beta gamma"),
        ];
        let cfg = RerankConfig { lambda: 0.1, k_rrf: 60 };
        rerank(&mut pool, "alpha beta gamma", &cfg).unwrap();
        assert_eq!(pool[0].item_id, "x1");
        assert!((pool[0].s_hat - 0.90).abs() < 1e-12);
        assert!((pool[1].s_hat - 0.82 - 0.1 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rerank_rejects_bad_config() {
        let mut pool = vec![cand("x1", 0.5, "t")];
        let bad = RerankConfig { lambda: -0.1, k_rrf: 60 };
        assert!(rerank(&mut pool, "q", &bad).is_err());
        let bad = RerankConfig { lambda: 0.1, k_rrf: 0 };
        assert!(rerank(&mut pool, "q", &bad).is_err());
    }

    /// Direct-summation oracle for RRF on three fixed lists, plus the frozen
    /// single-contribution value 1/61 and double 2/61 at k = 60.
    #[test]
    fn rrf_matches_direct_summation() {
        let lists = vec![
            vec!["a".to_string(), "b".to_string(), "c".to_string()],
            vec!["b".to_string(), "a".to_string(), "d".to_string()],
            vec!["e".to_string(), "b".to_string()],
        ];
        let fused = rrf_fuse(&lists, 60).unwrap();
        let score_of = |id: &str| fused.iter().find(|(i, _)| i == id).unwrap().1;

        // Oracle: sum 1/(60 + rank) by hand per id.
        let a = 1.0 / 61.0 + 1.0 / 62.0;
        let b = 1.0 / 62.0 + 1.0 / 61.0 + 1.0 / 62.0;
        let c = 1.0 / 63.0;
        let d = 1.0 / 63.0;
        let e = 1.0 / 61.0;
        assert!((score_of("a") - a).abs() < 1e-15);
        assert!((score_of("b") - b).abs() < 1e-15);
        assert!((score_of("c") - c).abs() < 1e-15);
        assert!((score_of("d") - d).abs() < 1e-15);
        assert!((score_of("e") - e).abs() < 1e-15);
        assert_eq!(fused[0].0, "b");
        // c and d tie exactly; ascending id breaks it.
        let pos = |id: &str| fused.iter().position(|(i, _)| i == id).unwrap();
        assert!(pos("c") + 1 == pos("d"));

        let single = rrf_fuse(&[vec!["only".to_string()]], 60).unwrap();
        assert!((single[0].1 - 1.0 / 61.0).abs() < 1e-15);
        let double =
            rrf_fuse(&[vec!["x".to_string()], vec!["x".to_string()]], 60).unwrap();
        assert!((double[0].1 - 2.0 / 61.0).abs() < 1e-15);
    }

    proptest! {
        /// Rerank with lambda = 0 never changes the score ordering.
        #[test]
        fn lambda_zero_preserves_order(
            scores in proptest::collection::vec(0.001f64..1.0, 1..40),
        ) {
            let mut pool: Vec<Candidate> = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let mut c = cand(&format!("i{i:03}"), s, "some words here");
                    c.source_rank = i;
                    c
                })
                .collect();
            let mut by_score = pool.clone();
            by_score.sort_by(|a, b| {
                b.s.partial_cmp(&a.s)
                    .unwrap()
                    .then(a.source_rank.cmp(&b.source_rank))
                    .then(a.item_id.cmp(&b.item_id))
            });
            let want: Vec<String> = by_score.iter().map(|c| c.item_id.clone()).collect();

            let cfg = RerankConfig { lambda: 0.0, k_rrf: 60 };
            rerank(&mut pool, "words here", &cfg).unwrap();
            let got: Vec<String> = pool.iter().map(|c| c.item_id.clone()).collect();
            prop_assert_eq!(got, want);
            for c in &pool {
                prop_assert_eq!(c.s_hat, c.s);
            }
        }

        /// Adding a covered query token to a candidate raises s_hat by
        /// exactly lambda/|Q| and never lowers its rank.
        #[test]
        fn covered_token_boost_is_exact(
            n in 2usize..30,
            pick in 0usize..30,
            lambda in 0.0f64..0.5,
        ) {
            let pick = pick % n;
            let query = "alpha beta gamma delta";
            let mut base: Vec<Candidate> = (0..n)
                .map(|i| {
                    let mut c = cand(&format!("i{i:03}"), 0.3 + 0.4 * (i as f64 / n as f64), "filler text only");
                    c.source_rank = i;
                    c
                })
                .collect();
            let mut boosted = base.clone();
            boosted[pick].text = "filler text only alpha".into();

            let cfg = RerankConfig { lambda, k_rrf: 60 };
            rerank(&mut base, query, &cfg).unwrap();
            rerank(&mut boosted, query, &cfg).unwrap();

            let id = format!("i{pick:03}");
            let s_hat_of = |pool: &Vec<Candidate>| {
                pool.iter().find(|c| c.item_id == id).unwrap().s_hat
            };
            let rank_of = |pool: &Vec<Candidate>| {
                pool.iter().position(|c| c.item_id == id).unwrap()
            };
            let q_len = 4.0;
            prop_assert!((s_hat_of(&boosted) - s_hat_of(&base) - lambda / q_len).abs() < 1e-12);
            prop_assert!(rank_of(&boosted) <= rank_of(&base));
        }

        /// s_hat stays within (0, 1 + lambda] when s is a valid base score.
        #[test]
        fn s_hat_bounds_hold(
            scores in proptest::collection::vec(0.000001f64..=1.0, 1..30),
            lambda in 0.0f64..0.5,
        ) {
            let mut pool: Vec<Candidate> = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| cand(&format!("i{i:03}"), s, "alpha beta"))
                .collect();
            let cfg = RerankConfig { lambda, k_rrf: 60 };
            rerank(&mut pool, "alpha beta", &cfg).unwrap();
            for c in &pool {
                prop_assert!(c.s_hat > 0.0);
                prop_assert!(c.s_hat <= 1.0 + lambda + 1e-12);
                prop_assert!((c.s_hat - (c.s + lambda * c.o)).abs() < 1e-15);
            }
        }

        /// RRF is exactly invariant under permutation of the input lists.
        #[test]
        fn rrf_is_permutation_invariant(
            n_lists in 2usize..5,
            len in 1usize..15,
            seed in 0u64..5000,
        ) {
            let mut lists: Vec<Vec<String>> = Vec::new();
            let mut state = seed;
            for _ in 0..n_lists {
                // Every list ranks the same id universe in its own order, so
                // ids are unique within a list and overlap across lists.
                let mut ids: Vec<String> = (0..len).map(|i| format!("d{i:02}")).collect();
                for i in (1..ids.len()).rev() {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let j = (state >> 33) as usize % (i + 1);
                    ids.swap(i, j);
                }
                lists.push(ids);
            }
            let forward = rrf_fuse(&lists, 60).unwrap();
            let mut reversed_lists = lists.clone();
            reversed_lists.reverse();
            let reversed = rrf_fuse(&reversed_lists, 60).unwrap();
            prop_assert_eq!(forward.len(), reversed.len());
            for (x, y) in forward.iter().zip(reversed.iter()) {
                prop_assert_eq!(&x.0, &y.0);
                prop_assert_eq!(x.1.to_bits(), y.1.to_bits());
            }
        }
    }
}
