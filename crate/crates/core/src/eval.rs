//! Retrieval quality metrics, TREC-style run/qrel files, and the ablation
//! grid that compares pipeline variants across embedding seeds.
//!
//! Metrics operate on paper rankings. Evidence items collapse to papers by
//! first occurrence, recall and nDCG are reported at fixed cutoffs in the
//! canonical column order (R@1, R@5, R@10, nDCG@10, MRR), and macro averages
//! weigh every query equally. A query with an empty relevant set has no
//! defined metric value and is a hard error, not a silent zero.

use crate::corpus::{ParagraphChunk, RecipeSummary};
use crate::embedding::{HashedEmbeddingBackend, Metric};
use crate::error::{Error, Result};
use crate::index::{build_dense_index, build_lexical_index, IndexItem, View};
use crate::pipeline::{run_pipeline, PipelineContext, PipelineVariant};
use crate::rerank::RerankConfig;
use crate::retrieval::{build_item_map, EvidenceContext, RetrievalParams};
use crate::util::map_bounded;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

/// Metric column order used by every table and report.
pub const METRIC_COLUMNS: [&str; 5] = ["R@1", "R@5", "R@10", "nDCG@10", "MRR"];

// ============================================================================
// Metrics
// ============================================================================

fn require_relevant(relevant: &BTreeSet<String>) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::UndefinedMetric(
            "metric undefined for an empty relevant set".into(),
        ));
    }
    Ok(())
}

/// Fraction of relevant papers found in the top `k` of the ranking.
pub fn recall_at_k(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    require_relevant(relevant)?;
    let hits = ranking.iter().take(k).filter(|p| relevant.contains(*p)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Binary-gain nDCG at `k`: DCG sums 1/log2(i+1) over relevant positions
/// (1-based i), normalized by the ideal DCG for this relevant set.
pub fn ndcg_at_k(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    require_relevant(relevant)?;
    let discount = |i: usize| 1.0 / ((i + 1) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, p)| relevant.contains(*p))
        .map(|(idx, _)| discount(idx + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    Ok(dcg / ideal)
}

/// Reciprocal rank of the first relevant paper over the full ranking, 0 when
/// none is present.
pub fn mrr(ranking: &[String], relevant: &BTreeSet<String>) -> Result<f64> {
    require_relevant(relevant)?;
    Ok(ranking
        .iter()
        .position(|p| relevant.contains(p))
        .map(|idx| 1.0 / (idx + 1) as f64)
        .unwrap_or(0.0))
}

/// The five metric values for one query or one macro average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub ndcg10: f64,
    pub mrr: f64,
}

impl MetricRow {
    fn compute(ranking: &[String], relevant: &BTreeSet<String>) -> Result<MetricRow> {
        Ok(MetricRow {
            r1: recall_at_k(ranking, relevant, 1)?,
            r5: recall_at_k(ranking, relevant, 5)?,
            r10: recall_at_k(ranking, relevant, 10)?,
            ndcg10: ndcg_at_k(ranking, relevant, 10)?,
            mrr: mrr(ranking, relevant)?,
        })
    }

    fn mean(rows: &[MetricRow]) -> MetricRow {
        let n = rows.len().max(1) as f64;
        let sum = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        MetricRow {
            r1: sum(|r| r.r1),
            r5: sum(|r| r.r5),
            r10: sum(|r| r.r10),
            ndcg10: sum(|r| r.ndcg10),
            mrr: sum(|r| r.mrr),
        }
    }

    fn cells(&self) -> [f64; 5] {
        [self.r1, self.r5, self.r10, self.ndcg10, self.mrr]
    }
}

fn table_header(label_width: usize) -> String {
    let mut line = format!("{:<label_width$}", "variant");
    for col in METRIC_COLUMNS {
        line.push_str(&format!("{col:>9}"));
    }
    line
}

fn table_row(label: &str, row: &MetricRow, label_width: usize) -> String {
    let mut line = format!("{label:<label_width$}");
    for v in row.cells() {
        line.push_str(&format!("{v:>9.4}"));
    }
    line
}

// ============================================================================
// Runs and evaluation
// ============================================================================

/// One query's paper ranking with scores, as written to a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub query_id: String,
    /// (paper_id, score), best first.
    pub ranking: Vec<(String, f64)>,
}

/// Collapses evidence items to a paper ranking by first occurrence.
pub fn collapse_to_papers(evidence: &EvidenceContext) -> RunResult {
    RunResult {
        query_id: evidence.query_id.clone(),
        ranking: evidence.paper_ranking(),
    }
}

/// A macro-averaged evaluation over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_evaluated: usize,
    /// Queries present in the run but absent from the qrels.
    pub n_skipped: usize,
    pub macro_avg: MetricRow,
    /// Sorted by query id.
    pub per_query: Vec<(String, MetricRow)>,
}

impl EvalReport {
    /// Renders the macro row under the canonical column header.
    pub fn table(&self) -> String {
        let width = 12;
        format!(
            "{}\n{}\n",
            table_header(width),
            table_row("macro", &self.macro_avg, width)
        )
    }
}

/// Scores a run against qrels, macro-averaging per-query metrics.
///
/// Queries missing from the qrels are skipped and counted; duplicate query
/// ids in the run and an empty intersection of run and qrels are errors.
pub fn evaluate_run(results: &[RunResult], qrels: &QrelSet) -> Result<EvalReport> {
    let mut seen = BTreeSet::new();
    let mut per_query = Vec::new();
    let mut n_skipped = 0usize;
    for r in results {
        if !seen.insert(r.query_id.as_str()) {
            return Err(Error::DuplicateId(r.query_id.clone()));
        }
        let Some(relevant) = qrels.relevant.get(&r.query_id) else {
            n_skipped += 1;
            continue;
        };
        let ids: Vec<String> = r.ranking.iter().map(|(p, _)| p.clone()).collect();
        per_query.push((r.query_id.clone(), MetricRow::compute(&ids, relevant)?));
    }
    if per_query.is_empty() {
        return Err(Error::UndefinedMetric(
            "no run query matched the qrels; nothing to evaluate".into(),
        ));
    }
    per_query.sort_by(|a, b| a.0.cmp(&b.0));
    let rows: Vec<MetricRow> = per_query.iter().map(|(_, m)| *m).collect();
    Ok(EvalReport {
        n_evaluated: per_query.len(),
        n_skipped,
        macro_avg: MetricRow::mean(&rows),
        per_query,
    })
}

// ============================================================================
// Query / qrel / run file IO
// ============================================================================

/// One retrieval query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

/// Queries, as read from a JSONL file of `{"query_id", "text"}` records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuerySet {
    pub queries: Vec<Query>,
}

impl QuerySet {
    pub fn load(path: &Path) -> Result<QuerySet> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut queries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let q: Query = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if q.query_id.is_empty() || q.text.trim().is_empty() {
                return Err(Error::MalformedRecord {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: "query_id and text must be non-empty".into(),
                });
            }
            if !seen.insert(q.query_id.clone()) {
                return Err(Error::DuplicateId(q.query_id));
            }
            queries.push(q);
        }
        Ok(QuerySet { queries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for q in &self.queries {
            writeln!(out, "{}", serde_json::to_string(q)?)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Relevance judgments: query id -> set of relevant paper ids.
///
/// File format is TREC-style whitespace-separated `qid 0 paper rel` lines;
/// lines with `rel <= 0` record explicit non-relevance and are ignored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QrelSet {
    pub relevant: BTreeMap<String, BTreeSet<String>>,
}

impl QrelSet {
    pub fn insert(&mut self, query_id: &str, paper_id: &str) {
        self.relevant
            .entry(query_id.to_string())
            .or_default()
            .insert(paper_id.to_string());
    }

    pub fn load(path: &Path) -> Result<QrelSet> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut set = QrelSet::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| Error::MalformedRecord {
                path: path.display().to_string(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(malformed(format!("expected 4 fields, got {}", fields.len())));
            }
            let rel: i64 = fields[3]
                .parse()
                .map_err(|_| malformed(format!("bad relevance {:?}", fields[3])))?;
            if rel > 0 {
                set.insert(fields[0], fields[2]);
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (qid, papers) in &self.relevant {
            for paper in papers {
                writeln!(out, "{qid} 0 {paper} 1")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Writes a run as TREC lines: `qid Q0 paper rank score tag`.
pub fn write_run(results: &[RunResult], tag: &str, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in results {
        for (rank0, (paper, score)) in r.ranking.iter().enumerate() {
            writeln!(out, "{} Q0 {} {} {} {}", r.query_id, paper, rank0 + 1, score, tag)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a TREC run file back into per-query rankings sorted by query id.
pub fn read_run(path: &Path) -> Result<Vec<RunResult>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut by_query: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRecord {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(malformed(format!("expected 6 fields, got {}", fields.len())));
        }
        let rank: usize =
            fields[3].parse().map_err(|_| malformed(format!("bad rank {:?}", fields[3])))?;
        let score: f64 =
            fields[4].parse().map_err(|_| malformed(format!("bad score {:?}", fields[4])))?;
        by_query
            .entry(fields[0].to_string())
            .or_default()
            .push((rank, fields[2].to_string(), score));
    }
    let mut out = Vec::with_capacity(by_query.len());
    for (query_id, mut rows) in by_query {
        rows.sort_by_key(|row| row.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::MalformedRecord {
                path: path.display().to_string(),
                line: 0,
                message: format!("duplicate rank for query {query_id}"),
            });
        }
        out.push(RunResult {
            query_id,
            ranking: rows.into_iter().map(|(_, p, s)| (p, s)).collect(),
        });
    }
    Ok(out)
}

// ============================================================================
// Ablation grid
// ============================================================================

/// Grid configuration: which hashed-backend seeds to sweep and the shared
/// pipeline knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationParams {
    pub seeds: Vec<u64>,
    pub dim: usize,
    pub metric: Metric,
    pub retrieval: RetrievalParams,
    pub rerank: RerankConfig,
    pub workers: usize,
}

impl Default for AblationParams {
    fn default() -> Self {
        AblationParams {
            seeds: vec![3, 5, 7, 11],
            dim: 256,
            metric: Metric::Cosine,
            retrieval: RetrievalParams::default(),
            rerank: RerankConfig::default(),
            workers: 4,
        }
    }
}

impl AblationParams {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParam("ablation needs at least one seed".into()));
        }
        if self.dim < 1 {
            return Err(Error::InvalidParam("dim must be >= 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::InvalidParam("workers must be >= 1".into()));
        }
        self.retrieval.validate()?;
        self.rerank.validate()
    }
}

/// One (variant, seed) cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub variant: PipelineVariant,
    pub seed: u64,
    pub metrics: MetricRow,
}

/// Per-seed metric gaps of the full pipeline over its two strongest
/// single-decision baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub seed: u64,
    pub d_r1_dense: f64,
    pub d_ndcg_dense: f64,
    pub d_r1_hybrid: f64,
    pub d_ndcg_hybrid: f64,
}

/// A grid cell that could not be computed; the rest of the grid still runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationFailure {
    pub variant: PipelineVariant,
    pub seed: u64,
    pub message: String,
}

/// The full grid: every computed (variant, seed) cell, per-variant means over
/// seeds, per-seed deltas when the reference variants are present, and the
/// cells that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    /// Seed-major, variants in canonical order within each seed.
    pub cells: Vec<AblationCell>,
    /// Canonical variant order, averaged over seeds; only variants with at
    /// least one computed cell appear.
    pub mean_by_variant: Vec<(PipelineVariant, MetricRow)>,
    pub deltas: Vec<DeltaRow>,
    pub failures: Vec<AblationFailure>,
}

impl AblationGrid {
    /// Mean-over-seeds table, one row per variant, canonical column order.
    pub fn table(&self) -> String {
        let width = 18;
        let mut out = table_header(width);
        out.push('\n');
        for (variant, row) in &self.mean_by_variant {
            out.push_str(&table_row(variant.name(), row, width));
            out.push('\n');
        }
        out
    }

    /// Per-seed delta lines; empty when reference variants were not run.
    pub fn delta_table(&self) -> String {
        let mut out = String::new();
        for d in &self.deltas {
            out.push_str(&format!(
                "seed {:>3}: dR@1 {:+.4} dnDCG@10 {:+.4} (vs dense-paragraph), dR@1 {:+.4} dnDCG@10 {:+.4} (vs hybrid)\n",
                d.seed, d.d_r1_dense, d.d_ndcg_dense, d.d_r1_hybrid, d.d_ndcg_hybrid
            ));
        }
        out
    }

    /// One line per failed cell; empty when the whole grid computed.
    pub fn failure_lines(&self) -> String {
        let mut out = String::new();
        for f in &self.failures {
            out.push_str(&format!(
                "FAILED {} seed {}: {}\n",
                f.variant.name(),
                f.seed,
                f.message
            ));
        }
        out
    }
}

/// Runs every variant over every seed: per seed, hashed embeddings and all
/// three indexes are rebuilt, each variant answers every query, and rankings
/// are scored against the qrels.
///
/// A cell that fails is recorded in `failures` and the grid keeps going; only
/// malformed inputs (bad params, no variants, no queries) abort the whole run.
pub fn run_ablation(
    chunks: &[ParagraphChunk],
    recipes: &[RecipeSummary],
    queries: &QuerySet,
    qrels: &QrelSet,
    variants: &[PipelineVariant],
    params: &AblationParams,
) -> Result<AblationGrid> {
    params.validate()?;
    if variants.is_empty() {
        return Err(Error::InvalidParam("ablation needs at least one variant".into()));
    }
    if queries.queries.is_empty() {
        return Err(Error::InvalidParam("ablation needs at least one query".into()));
    }

    let chunk_items: Vec<IndexItem> = chunks
        .iter()
        .map(|c| IndexItem { item_id: &c.chunk_id, paper_id: &c.paper_id, text: &c.text })
        .collect();
    let recipe_items: Vec<IndexItem> = recipes
        .iter()
        .map(|r| IndexItem { item_id: &r.recipe_id, paper_id: &r.paper_id, text: &r.text })
        .collect();
    let items = build_item_map(chunks, recipes);

    let mut cells = Vec::with_capacity(params.seeds.len() * variants.len());
    let mut failures = Vec::new();
    for &seed in &params.seeds {
        let built = HashedEmbeddingBackend::new(params.dim, seed).and_then(|backend| {
            let paragraph =
                build_dense_index(&chunk_items, View::Paragraph, &backend, params.metric)?;
            let recipe =
                build_dense_index(&recipe_items, View::Recipe, &backend, params.metric)?;
            let lexical = build_lexical_index(&chunk_items, Default::default())?;
            Ok((backend, paragraph, recipe, lexical))
        });
        let (backend, paragraph, recipe, lexical) = match built {
            Ok(b) => b,
            Err(e) => {
                // A seed-level build error fails every cell of that seed.
                for &variant in variants {
                    failures.push(AblationFailure { variant, seed, message: e.to_string() });
                }
                continue;
            }
        };
        let ctx = PipelineContext {
            paragraph_index: Some(&paragraph),
            recipe_index: Some(&recipe),
            lexical_index: Some(&lexical),
            items: &items,
            backend: &backend,
            params: params.retrieval,
            rerank: params.rerank,
            assemble_prompt: false,
        };
        for &variant in variants {
            let cell = map_bounded(&queries.queries, params.workers, |q| {
                run_pipeline(&ctx, variant, &q.query_id, &q.text).map(|ev| collapse_to_papers(&ev))
            })
            .into_iter()
            .collect::<Result<Vec<RunResult>>>()
            .and_then(|results| evaluate_run(&results, qrels));
            match cell {
                Ok(report) => {
                    cells.push(AblationCell { variant, seed, metrics: report.macro_avg })
                }
                Err(e) => {
                    failures.push(AblationFailure { variant, seed, message: e.to_string() })
                }
            }
        }
    }

    let canonical: Vec<PipelineVariant> = PipelineVariant::all()
        .into_iter()
        .filter(|v| variants.contains(v))
        .collect();
    let mean_by_variant: Vec<(PipelineVariant, MetricRow)> = canonical
        .iter()
        .filter_map(|&v| {
            let rows: Vec<MetricRow> =
                cells.iter().filter(|c| c.variant == v).map(|c| c.metrics).collect();
            (!rows.is_empty()).then(|| (v, MetricRow::mean(&rows)))
        })
        .collect();

    let lookup: BTreeMap<(u64, PipelineVariant), MetricRow> =
        cells.iter().map(|c| ((c.seed, c.variant), c.metrics)).collect();
    let deltas = params
        .seeds
        .iter()
        .filter_map(|&seed| {
            let full = lookup.get(&(seed, PipelineVariant::Reciper))?;
            let dense = lookup.get(&(seed, PipelineVariant::DenseParagraph))?;
            let hybrid = lookup.get(&(seed, PipelineVariant::Hybrid))?;
            Some(DeltaRow {
                seed,
                d_r1_dense: full.r1 - dense.r1,
                d_ndcg_dense: full.ndcg10 - dense.ndcg10,
                d_r1_hybrid: full.r1 - hybrid.r1,
                d_ndcg_hybrid: full.ndcg10 - hybrid.ndcg10,
            })
        })
        .collect();

    Ok(AblationGrid { cells, mean_by_variant, deltas, failures })
}

// ============================================================================
// Tests
// ============================================================================
