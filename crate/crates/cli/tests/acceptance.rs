//! Acceptance gate: one test per criterion, most-basic first. Each test
//! pins its tolerance and runtime bound in code and prints one PASS line;
//! a failure panics with the offending values.

mod oracles;

use oracles::RerankInput;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use reciper_core::index::{IndexItem, SearchHit};
use reciper_core::{
    base_score, build_dense_index, build_item_map, build_lexical_index, coverage, dedupe_pool,
    generate, mrr, ndcg_at_k, recall_at_k, rerank, rrf_fuse, run_ablation, run_pipeline,
    tokenize, AblationGrid, AblationParams, Bm25Params, Candidate, CandidatePool,
    EmbeddingBackend, HashedEmbeddingBackend, Metric, PipelineContext, PipelineVariant,
    PoolStage, RerankConfig, RetrievalParams, Stream, SynthCorpus, SynthParams, View,
};
use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

/// Tolerance for values that must be exact up to float representation.
const TOL_EXACT: f64 = 1e-12;

// ============================================================================
// Criterion 1: score formulas, analytically
// ============================================================================

#[test]
fn criterion_1_formula_fidelity() {
    let start = Instant::now();

    assert!((base_score(0.0) - 1.0).abs() < TOL_EXACT);
    assert!((base_score(1.0) - 0.5).abs() < TOL_EXACT);

    let c = coverage(&tokenize("a b c"), &tokenize("b c d"));
    assert!((c - 2.0 / 3.0).abs() < TOL_EXACT, "coverage = {c}");

    // A fully covered candidate at s = 0.80 must outrank an uncovered one at
    // s = 0.85 once the coverage nudge (lambda = 0.1) is applied.
    let cand = |id: &str, s: f64, text: &str, rank: usize| Candidate {
        item_id: id.into(),
        paper_id: id.into(),
        stream: Stream::Paragraph,
        title: String::new(),
        text: text.into(),
        s,
        o: 0.0,
        s_hat: s,
        source_rank: rank,
    };
    let mut pool = vec![
        cand("uncovered", 0.85, "gamma delta", 0),
        cand("covered", 0.80, "alpha beta", 1),
    ];
    rerank(&mut pool, "alpha beta", &RerankConfig { lambda: 0.1, k_rrf: 60 })
        .expect("rerank succeeds");
    assert_eq!(pool[0].item_id, "covered");
    assert!((pool[0].s_hat - 0.90).abs() < TOL_EXACT, "s_hat = {}", pool[0].s_hat);
    assert!((pool[1].s_hat - 0.85).abs() < TOL_EXACT, "s_hat = {}", pool[1].s_hat);

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}, bound 1s");
    println!("ACCEPTANCE 1 PASS: score and coverage formulas exact to 1e-12 ({elapsed:?})");
}

// ============================================================================
// Criterion 2: engine vs independent oracles on the canonical corpus
// ============================================================================

fn canonical_corpus() -> SynthCorpus {
    let corpus = generate(&SynthParams::default()).expect("generation succeeds");
    assert_eq!(corpus.documents.len(), 50);
    assert_eq!(corpus.chunks.len(), 200);
    assert_eq!(corpus.recipes.len(), 50);
    assert_eq!(corpus.queries.queries.len(), 100);
    corpus
}

fn hits_to_pairs(hits: &[SearchHit]) -> Vec<(String, f64)> {
    hits.iter().map(|h| (h.item_id.clone(), h.s)).collect()
}

fn assert_ranked_lists_match(engine: &[(String, f64)], oracle: &[(String, f64)], what: &str) {
    let engine_ids: Vec<&str> = engine.iter().map(|(id, _)| id.as_str()).collect();
    let oracle_ids: Vec<&str> = oracle.iter().map(|(id, _)| id.as_str()).collect();
    assert_eq!(engine_ids, oracle_ids, "{what}: ordering diverged");
    for ((id, e), (_, o)) in engine.iter().zip(oracle) {
        assert!((e - o).abs() < TOL_EXACT, "{what}: score for {id}: {e} vs {o}");
    }
}

#[test]
fn criterion_2_oracle_equivalence() {
    let start = Instant::now();
    let corpus = canonical_corpus();
    let backend = HashedEmbeddingBackend::new(256, 7).expect("backend builds");

    let chunk_items: Vec<IndexItem> = corpus
        .chunks
        .iter()
        .map(|c| IndexItem { item_id: &c.chunk_id, paper_id: &c.paper_id, text: &c.text })
        .collect();
    let recipe_items: Vec<IndexItem> = corpus
        .recipes
        .iter()
        .map(|r| IndexItem { item_id: &r.recipe_id, paper_id: &r.paper_id, text: &r.text })
        .collect();
    let pindex = build_dense_index(&chunk_items, View::Paragraph, &backend, Metric::Cosine)
        .expect("paragraph index");
    let rindex = build_dense_index(&recipe_items, View::Recipe, &backend, Metric::Cosine)
        .expect("recipe index");
    let lexical = build_lexical_index(&chunk_items, Bm25Params { k1: 1.2, b: 0.75 })
        .expect("lexical index");
    let items = build_item_map(&corpus.chunks, &corpus.recipes);

    let pvectors: Vec<(String, Vec<f64>)> =
        pindex.entries.iter().map(|e| (e.item_id.clone(), e.vector.values.clone())).collect();
    let rvectors: Vec<(String, Vec<f64>)> =
        rindex.entries.iter().map(|e| (e.item_id.clone(), e.vector.values.clone())).collect();
    let bm25_docs: Vec<(String, String)> =
        corpus.chunks.iter().map(|c| (c.chunk_id.clone(), c.text.clone())).collect();
    let cfg = RerankConfig { lambda: 0.1, k_rrf: 60 };

    for q in &corpus.queries.queries {
        let qvec = backend.embed_one(&q.query_id, &q.text).expect("query embeds");

        // Dense search, both views.
        let phits = pindex.search(&qvec, 10).expect("paragraph search");
        assert_ranked_lists_match(
            &hits_to_pairs(&phits),
            &oracles::dense_rank(&pvectors, &qvec.values, 10),
            &format!("dense paragraph {}", q.query_id),
        );
        let rhits = rindex.search(&qvec, 10).expect("recipe search");
        assert_ranked_lists_match(
            &hits_to_pairs(&rhits),
            &oracles::dense_rank(&rvectors, &qvec.values, 10),
            &format!("dense recipe {}", q.query_id),
        );

        // BM25.
        let lhits = lexical.search(&q.text, 10);
        assert_ranked_lists_match(
            &lhits,
            &oracles::bm25_rank(&bm25_docs, &q.text, 1.2, 0.75, 10),
            &format!("bm25 {}", q.query_id),
        );

        // Reciprocal-rank fusion of the dense and lexical id lists.
        let dense_ids: Vec<String> = phits.iter().map(|h| h.item_id.clone()).collect();
        let lex_ids: Vec<String> = lhits.iter().map(|(id, _)| id.clone()).collect();
        let fused = rrf_fuse(&[dense_ids.clone(), lex_ids.clone()], 60).expect("fusion");
        assert_ranked_lists_match(
            &fused,
            &oracles::rrf(&[dense_ids, lex_ids], 60),
            &format!("rrf {}", q.query_id),
        );

        // Rerank ordering over the merged two-view candidate list.
        let to_cands = |hits: &[SearchHit], stream: Stream| -> Vec<Candidate> {
            hits.iter()
                .enumerate()
                .map(|(i, h)| {
                    let rec = &items[&h.item_id];
                    Candidate {
                        item_id: h.item_id.clone(),
                        paper_id: h.paper_id.clone(),
                        stream,
                        title: rec.title.clone(),
                        text: rec.text.clone(),
                        s: h.s,
                        o: 0.0,
                        s_hat: h.s,
                        source_rank: i,
                    }
                })
                .collect()
        };
        let mut merged = to_cands(&phits, Stream::Paragraph);
        merged.extend(to_cands(&rhits, Stream::Recipe));
        let oracle_inputs: Vec<RerankInput> = merged
            .iter()
            .map(|c| RerankInput {
                item_id: c.item_id.clone(),
                source_rank: c.source_rank,
                s: c.s,
                doc: format!("{} {}", c.title, c.text),
            })
            .collect();
        rerank(&mut merged, &q.text, &cfg).expect("rerank succeeds");
        let engine_order: Vec<String> = merged.iter().map(|c| c.item_id.clone()).collect();
        assert_eq!(
            engine_order,
            oracles::rerank_order(&oracle_inputs, &q.text, 0.1),
            "rerank ordering diverged on {}",
            q.query_id
        );

        // All five metrics on the paper-collapsed dense ranking.
        let mut ranking: Vec<String> = Vec::new();
        for h in &phits {
            if !ranking.contains(&h.paper_id) {
                ranking.push(h.paper_id.clone());
            }
        }
        let relevant: &BTreeSet<String> = &corpus.qrels.relevant[&q.query_id];
        let pairs: [(f64, f64); 5] = [
            (recall_at_k(&ranking, relevant, 1).unwrap(), oracles::recall_at(&ranking, relevant, 1)),
            (recall_at_k(&ranking, relevant, 5).unwrap(), oracles::recall_at(&ranking, relevant, 5)),
            (recall_at_k(&ranking, relevant, 10).unwrap(), oracles::recall_at(&ranking, relevant, 10)),
            (ndcg_at_k(&ranking, relevant, 10).unwrap(), oracles::ndcg_at(&ranking, relevant, 10)),
            (mrr(&ranking, relevant).unwrap(), oracles::mrr_full(&ranking, relevant)),
        ];
        for (i, (engine, oracle)) in pairs.iter().enumerate() {
            assert!(
                (engine - oracle).abs() < TOL_EXACT,
                "metric {i} on {}: {engine} vs {oracle}",
                q.query_id
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}, bound 30s");
    println!(
        "ACCEPTANCE 2 PASS: dense, bm25, rrf, rerank, and all five metrics match \
         independent oracles over 100 queries ({elapsed:?})"
    );
}

// ============================================================================
// Criterion 3: pipeline invariants, property-tested
// ============================================================================

const WORDS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
const PROPTEST_CASES: u32 = 128;

fn pool_strategy() -> impl Strategy<Value = CandidatePool> {
    let candidate = (
        0..8usize,
        any::<bool>(),
        0.0f64..=1.0,
        0..64usize,
        proptest::collection::vec(prop::sample::select(&WORDS[..]), 0..4),
    );
    proptest::collection::vec(candidate, 1..40).prop_map(|specs| {
        let candidates = specs
            .into_iter()
            .enumerate()
            .map(|(i, (paper, is_recipe, s, rank, words))| Candidate {
                item_id: format!("item{i:03}"),
                paper_id: format!("paper{paper}"),
                stream: if is_recipe { Stream::Recipe } else { Stream::Paragraph },
                title: String::new(),
                text: words.join(" "),
                s,
                o: 0.0,
                s_hat: s,
                source_rank: rank,
            })
            .collect();
        CandidatePool { query_id: "q".into(), stage: PoolStage::Merged, candidates }
    })
}

fn runner() -> TestRunner {
    TestRunner::new(Config { cases: PROPTEST_CASES, ..Config::default() })
}

/// (s desc, source_rank asc, item_id asc): the pool ordering contract.
fn pool_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.s.partial_cmp(&a.s)
        .unwrap()
        .then(a.source_rank.cmp(&b.source_rank))
        .then(a.item_id.cmp(&b.item_id))
}

#[test]
fn criterion_3_pipeline_invariants() {
    // Dedup is idempotent and keeps exactly the best candidate per
    // (paper, stream) group.
    runner()
        .run(&pool_strategy(), |pool| {
            let once = dedupe_pool(pool.clone()).unwrap();
            let twice = dedupe_pool(once.clone()).unwrap();
            prop_assert_eq!(&once.candidates, &twice.candidates, "dedup not idempotent");

            let mut groups: std::collections::BTreeMap<(String, Stream), Candidate> =
                std::collections::BTreeMap::new();
            for c in &pool.candidates {
                let key = (c.paper_id.clone(), c.stream);
                let replace = match groups.get(&key) {
                    None => true,
                    Some(cur) => {
                        pool_order(c, cur) == std::cmp::Ordering::Less
                    }
                };
                if replace {
                    groups.insert(key, c.clone());
                }
            }
            prop_assert_eq!(once.candidates.len(), groups.len());
            for c in &once.candidates {
                let winner = &groups[&(c.paper_id.clone(), c.stream)];
                prop_assert_eq!(&c.item_id, &winner.item_id, "wrong group winner");
            }
            for w in once.candidates.windows(2) {
                prop_assert!(
                    pool_order(&w[0], &w[1]) != std::cmp::Ordering::Greater,
                    "dedup output out of order"
                );
            }
            Ok(())
        })
        .expect("dedup properties hold");

    // With lambda = 0 the rerank is a no-op on the ordering.
    runner()
        .run(&pool_strategy(), |pool| {
            let mut expected = pool.candidates.clone();
            expected.sort_by(pool_order);
            let mut reranked = expected.clone();
            rerank(&mut reranked, "alpha beta gamma", &RerankConfig { lambda: 0.0, k_rrf: 60 })
                .unwrap();
            let got: Vec<&str> = reranked.iter().map(|c| c.item_id.as_str()).collect();
            let want: Vec<&str> = expected.iter().map(|c| c.item_id.as_str()).collect();
            prop_assert_eq!(got, want, "lambda = 0 changed the ordering");
            Ok(())
        })
        .expect("lambda-zero property holds");

    // Same seed, same bytes: generation and a full retrieval pass are
    // deterministic end to end.
    runner()
        .run(&(any::<u64>(), 2usize..4, 0.0f64..=1.0), |(seed, n_papers, ratio)| {
            let params = SynthParams {
                n_papers,
                paragraphs_per_paper: 2,
                queries_per_paper: 1,
                procedural_signal_ratio: ratio,
                seed,
            };
            let c1 = generate(&params).unwrap();
            let c2 = generate(&params).unwrap();
            prop_assert_eq!(
                serde_json::to_string(&c1).unwrap(),
                serde_json::to_string(&c2).unwrap(),
                "generation not byte-deterministic"
            );

            let run_once = |corpus: &SynthCorpus| -> String {
                let backend = HashedEmbeddingBackend::new(16, seed).unwrap();
                let items: Vec<IndexItem> = corpus
                    .chunks
                    .iter()
                    .map(|c| IndexItem {
                        item_id: &c.chunk_id,
                        paper_id: &c.paper_id,
                        text: &c.text,
                    })
                    .collect();
                let pindex =
                    build_dense_index(&items, View::Paragraph, &backend, Metric::Cosine).unwrap();
                let imap = build_item_map(&corpus.chunks, &corpus.recipes);
                let ctx = PipelineContext {
                    paragraph_index: Some(&pindex),
                    recipe_index: None,
                    lexical_index: None,
                    items: &imap,
                    backend: &backend,
                    params: RetrievalParams::default(),
                    rerank: RerankConfig::default(),
                    assemble_prompt: false,
                };
                corpus
                    .queries
                    .queries
                    .iter()
                    .map(|q| {
                        run_pipeline(&ctx, PipelineVariant::DenseParagraph, &q.query_id, &q.text)
                            .unwrap()
                            .to_jsonl()
                            .unwrap()
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            prop_assert_eq!(run_once(&c1), run_once(&c2), "retrieval not byte-deterministic");
            Ok(())
        })
        .expect("determinism property holds");

    println!(
        "ACCEPTANCE 3 PASS: dedup idempotence and group-max, lambda-zero rank \
         preservation, and byte-determinism hold over {PROPTEST_CASES} random cases each"
    );
}

// ============================================================================
// Criterion 4: the dual-view pipeline beats paragraph-only dense retrieval
// ============================================================================

fn grid_cell(
    grid: &AblationGrid,
    variant: PipelineVariant,
    seed: u64,
) -> &reciper_core::eval::MetricRow {
    &grid
        .cells
        .iter()
        .find(|c| c.variant == variant && c.seed == seed)
        .unwrap_or_else(|| panic!("missing cell {variant} seed {seed}"))
        .metrics
}

#[test]
fn criterion_4_dual_view_beats_paragraph_only() {
    let start = Instant::now();
    let corpus = canonical_corpus();
    let seeds = [3u64, 5, 7, 11];
    let params = AblationParams {
        seeds: seeds.to_vec(),
        dim: 256,
        metric: Metric::Cosine,
        retrieval: RetrievalParams::default(),
        rerank: RerankConfig::default(),
        workers: 4,
    };
    let grid = run_ablation(
        &corpus.chunks,
        &corpus.recipes,
        &corpus.queries,
        &corpus.qrels,
        &[PipelineVariant::DenseParagraph, PipelineVariant::Reciper],
        &params,
    )
    .expect("grid runs");
    assert!(grid.failures.is_empty(), "failed cells: {:?}", grid.failures);

    let full = grid_cell(&grid, PipelineVariant::Reciper, 7);
    let base = grid_cell(&grid, PipelineVariant::DenseParagraph, 7);
    assert!(
        full.r1 >= base.r1,
        "seed 7 R@1: full {} < paragraph-only {}",
        full.r1,
        base.r1
    );
    assert!(
        full.ndcg10 >= base.ndcg10,
        "seed 7 nDCG@10: full {} < paragraph-only {}",
        full.ndcg10,
        base.ndcg10
    );

    let positive = seeds
        .iter()
        .filter(|&&seed| {
            grid_cell(&grid, PipelineVariant::Reciper, seed).r1
                > grid_cell(&grid, PipelineVariant::DenseParagraph, seed).r1
        })
        .count();
    assert!(positive >= 3, "R@1 gain positive for only {positive} of 4 seeds");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}, bound 2min");
    println!(
        "ACCEPTANCE 4 PASS: seed 7 R@1 {:.4} >= {:.4}, nDCG@10 {:.4} >= {:.4}, \
         R@1 gain positive for {positive}/4 seeds ({elapsed:?})",
        full.r1, base.r1, full.ndcg10, base.ndcg10
    );
}

// ============================================================================
// Criterion 5: the ablate command covers every variant, columns in order
// ============================================================================

#[test]
fn criterion_5_ablate_command_covers_all_variants() {
    let bin = env!("CARGO_BIN_EXE_reciper");
    let root = tempfile::tempdir().expect("tempdir");
    let dir = |name: &str| root.path().join(name);
    let arg = |p: &Path| p.to_str().expect("utf-8 path").to_string();

    let run = |args: &[String]| {
        let out = Command::new(bin).args(args).output().expect("binary spawns");
        assert!(
            out.status.success(),
            "{:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
        out
    };

    run(&[
        "synth".into(),
        "--out".into(),
        arg(&dir("synth")),
        "--seed".into(),
        "7".into(),
        "--n-papers".into(),
        "6".into(),
    ]);
    run(&[
        "ingest".into(),
        "--docs".into(),
        arg(&dir("synth").join("documents.jsonl")),
        "--recipe-backend".into(),
        "file".into(),
        "--recipe-file".into(),
        arg(&dir("synth").join("recipes.jsonl")),
        "--out".into(),
        arg(&dir("ingest")),
    ]);
    let out = run(&[
        "ablate".into(),
        "--corpus".into(),
        arg(&dir("ingest").join("corpus.jsonl")),
        "--queries".into(),
        arg(&dir("synth").join("queries.jsonl")),
        "--qrels".into(),
        arg(&dir("synth").join("qrels.txt")),
        "--seeds".into(),
        "3".into(),
        "--dim".into(),
        "32".into(),
        "--out".into(),
        arg(&dir("ablate")),
    ]);

    let stdout = String::from_utf8(out.stdout).expect("utf-8 stdout");
    let lines: Vec<&str> = stdout.lines().collect();
    let header: Vec<&str> = lines[0].split_whitespace().collect();
    assert_eq!(header, ["variant", "R@1", "R@5", "R@10", "nDCG@10", "MRR"]);
    let expected = [
        "bm25",
        "bm25+dense",
        "dense-paragraph",
        "dense-recipe",
        "rerank-paragraph",
        "hybrid",
        "hybrid-rrf",
        "rerank-both",
        "reciper",
    ];
    for (line, variant) in lines[1..=9].iter().zip(expected) {
        assert_eq!(line.split_whitespace().next(), Some(variant), "row order");
    }
    assert!(!stdout.contains("FAILED"), "grid reported failures:\n{stdout}");
    println!("ACCEPTANCE 5 PASS: ablate ran all nine variants, columns R@1 R@5 R@10 nDCG@10 MRR");
}

// ============================================================================
// Criterion 6: recipe-only retrieval loses when queries are contextual
// ============================================================================

#[test]
fn criterion_6_recipe_only_weak_on_contextual_queries() {
    let corpus = generate(&SynthParams { procedural_signal_ratio: 0.2, ..SynthParams::default() })
        .expect("generation succeeds");
    let params = AblationParams {
        seeds: vec![7],
        dim: 256,
        metric: Metric::Cosine,
        retrieval: RetrievalParams::default(),
        rerank: RerankConfig::default(),
        workers: 4,
    };
    let grid = run_ablation(
        &corpus.chunks,
        &corpus.recipes,
        &corpus.queries,
        &corpus.qrels,
        &[PipelineVariant::DenseParagraph, PipelineVariant::DenseRecipe],
        &params,
    )
    .expect("grid runs");
    assert!(grid.failures.is_empty(), "failed cells: {:?}", grid.failures);

    let recipe_r1 = grid_cell(&grid, PipelineVariant::DenseRecipe, 7).r1;
    let paragraph_r1 = grid_cell(&grid, PipelineVariant::DenseParagraph, 7).r1;
    assert!(
        recipe_r1 < paragraph_r1,
        "recipe-only R@1 {recipe_r1} not strictly below paragraph {paragraph_r1}"
    );
    println!(
        "ACCEPTANCE 6 PASS: at 0.2 procedural signal, recipe-only R@1 {recipe_r1:.4} < \
         paragraph R@1 {paragraph_r1:.4}"
    );
}

// ============================================================================
// Criterion 7: network-gated reproduction harness (off by default)
// ============================================================================

/// Reference full-pipeline R@1 on the external benchmark this harness
/// replays, and the allowed absolute deviation.
const REFERENCE_RECIPER_R1: f64 = 0.8682;
const REFERENCE_R1_TOLERANCE: f64 = 0.02;

/// Replays the full pipeline against a real embedding service and a
/// reference dataset, then checks R@1 against the published number. This is
/// a reproduction harness, not a CI gate: it needs network access plus the
/// following environment, and stays `#[ignore]`d so `cargo test` never
/// touches the network.
///
/// - `RECIPER_REPRO_DOCS`: documents JSONL ({paper_id, title, body})
/// - `RECIPER_REPRO_RECIPES`: recipe JSONL ({paper_id, n, text})
/// - `RECIPER_REPRO_QUERIES`: queries JSONL ({query_id, text})
/// - `RECIPER_REPRO_QRELS`: TREC qrels
/// - `RECIPER_REPRO_ENDPOINT`, `RECIPER_REPRO_MODEL`, `RECIPER_REPRO_DIM`:
///   embedding service to call, plus `RECIPER_EMBED_TOKEN` for auth
///
/// Run with: `cargo test --test acceptance -- --ignored criterion_7`
#[test]
#[ignore = "network-gated reproduction harness; set RECIPER_REPRO_* and run with --ignored"]
fn criterion_7_reference_reproduction_harness() {
    let var = |name: &str| {
        std::env::var(name).unwrap_or_else(|_| panic!("{name} must be set for the harness"))
    };
    let docs_path = var("RECIPER_REPRO_DOCS");
    let recipes_path = var("RECIPER_REPRO_RECIPES");
    let queries_path = var("RECIPER_REPRO_QUERIES");
    let qrels_path = var("RECIPER_REPRO_QRELS");
    let endpoint = var("RECIPER_REPRO_ENDPOINT");
    let model = var("RECIPER_REPRO_MODEL");
    let dim: usize = var("RECIPER_REPRO_DIM").parse().expect("RECIPER_REPRO_DIM is a number");

    let docs = reciper_core::ingest_documents(Path::new(&docs_path)).expect("documents load");
    let chunks: Vec<_> = docs
        .iter()
        .map(|d| reciper_core::chunk_document(d, &reciper_core::ChunkParams::default()))
        .collect::<reciper_core::Result<Vec<_>>>()
        .expect("chunking succeeds")
        .into_iter()
        .flatten()
        .collect();
    let recipe_backend =
        reciper_core::FileRecipeBackend::load(Path::new(&recipes_path)).expect("recipes load");
    let recipes =
        reciper_core::extract_recipes(&docs, &recipe_backend, 1, 4).expect("extraction succeeds");
    let queries =
        reciper_core::QuerySet::load(Path::new(&queries_path)).expect("queries load");
    let qrels = reciper_core::QrelSet::load(Path::new(&qrels_path)).expect("qrels load");

    let backend = reciper_core::RemoteEmbeddingBackend::new(
        &endpoint,
        &model,
        dim,
        Duration::from_secs(120),
    )
    .expect("backend builds");
    let chunk_items: Vec<IndexItem> = chunks
        .iter()
        .map(|c| IndexItem { item_id: &c.chunk_id, paper_id: &c.paper_id, text: &c.text })
        .collect();
    let recipe_items: Vec<IndexItem> = recipes
        .iter()
        .map(|r| IndexItem { item_id: &r.recipe_id, paper_id: &r.paper_id, text: &r.text })
        .collect();
    let pindex = build_dense_index(&chunk_items, View::Paragraph, &backend, Metric::Cosine)
        .expect("paragraph index");
    let rindex = build_dense_index(&recipe_items, View::Recipe, &backend, Metric::Cosine)
        .expect("recipe index");
    let items = build_item_map(&chunks, &recipes);
    let ctx = PipelineContext {
        paragraph_index: Some(&pindex),
        recipe_index: Some(&rindex),
        lexical_index: None,
        items: &items,
        backend: &backend,
        params: RetrievalParams::default(),
        rerank: RerankConfig::default(),
        assemble_prompt: false,
    };

    let results: Vec<reciper_core::RunResult> = queries
        .queries
        .iter()
        .map(|q| {
            let ev = run_pipeline(&ctx, PipelineVariant::Reciper, &q.query_id, &q.text)
                .expect("pipeline runs");
            reciper_core::collapse_to_papers(&ev)
        })
        .collect();
    let report = reciper_core::evaluate_run(&results, &qrels).expect("evaluation succeeds");

    let r1 = report.macro_avg.r1;
    assert!(
        (r1 - REFERENCE_RECIPER_R1).abs() <= REFERENCE_R1_TOLERANCE,
        "R@1 {r1:.4} outside {REFERENCE_RECIPER_R1} +/- {REFERENCE_R1_TOLERANCE}"
    );
    println!(
        "ACCEPTANCE 7 PASS: harness R@1 {r1:.4} within {REFERENCE_R1_TOLERANCE} of \
         {REFERENCE_RECIPER_R1}"
    );
}
