//! The six subcommands.
//!
//! Every command claims its output directory, validates its inputs exist,
//! does the work through the core library, then writes the resolved config
//! and a manifest. Per-command flags are applied onto the resolved settings
//! here so flag > config-file > default precedence holds everywhere.

use crate::artifacts::RunDir;
use crate::backends::{build_embedding_backend, build_recipe_backend};
use crate::config::{apply, merge, require_file, Settings};
use crate::error::{CliError, CliResult, EXIT_INCOMPLETE};
use clap::{Args, ValueEnum};
use reciper_core::eval::write_run;
use reciper_core::{
    build_dense_index, build_item_map, build_lexical_index, chunk_document, collapse_to_papers,
    evaluate_run, generate, ingest_documents, load_corpus, load_dense_index, load_lexical_index,
    persist_corpus, persist_dense_index, persist_lexical_index, run_ablation, run_pipeline,
    AblationParams, Bm25Params, DenseIndex, Metric, PipelineContext, PipelineVariant, QrelSet,
    QuerySet, RunResult, SynthParams, View,
};
use reciper_core::index::IndexItem;
use reciper_core::util::map_bounded;
use serde::Serialize;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

// ============================================================================
// Shared argument groups
// ============================================================================

/// Embedding-backend overrides shared by `index` and `query`.
#[derive(Debug, Args)]
pub struct BackendArgs {
    /// Embedding backend: hashed-test | file | remote
    #[arg(long)]
    pub backend: Option<String>,
    /// Embedding dimensionality (hashed-test and remote)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Model name sent to the remote embedding service
    #[arg(long)]
    pub model: Option<String>,
    /// Remote embedding service URL
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Precomputed-vector JSONL file (file backend)
    #[arg(long)]
    pub vectors: Option<PathBuf>,
}

fn apply_backend_args(s: &mut Settings, a: &BackendArgs) {
    apply(&mut s.backend.name, a.backend.clone());
    apply(&mut s.backend.dim, a.dim);
    merge(&mut s.backend.model, a.model.clone());
    merge(&mut s.backend.endpoint, a.endpoint.clone());
    merge(&mut s.backend.vectors, a.vectors.clone());
}

// ============================================================================
// synth
// ============================================================================

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Papers to generate (sibling pairs share context vocabulary)
    #[arg(long)]
    pub n_papers: Option<usize>,
    /// Body paragraphs per paper
    #[arg(long)]
    pub paragraphs_per_paper: Option<usize>,
    /// Queries per paper
    #[arg(long)]
    pub queries_per_paper: Option<usize>,
    /// Fraction of procedural tokens per query, in [0, 1]
    #[arg(long)]
    pub ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SynthRecipeRecord<'a> {
    paper_id: &'a str,
    n: usize,
    text: &'a str,
}

fn recipe_ordinal(recipe_id: &str) -> CliResult<usize> {
    recipe_id
        .rsplit(":r")
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::usage(format!("recipe id {recipe_id:?} lacks a :rN suffix")))
}

pub fn cmd_synth(mut settings: Settings, args: &SynthArgs) -> CliResult<u8> {
    apply(&mut settings.synth.n_papers, args.n_papers);
    apply(&mut settings.synth.paragraphs_per_paper, args.paragraphs_per_paper);
    apply(&mut settings.synth.queries_per_paper, args.queries_per_paper);
    apply(&mut settings.synth.ratio, args.ratio);

    let mut out = RunDir::claim(&settings.out)?;
    let params = SynthParams {
        n_papers: settings.synth.n_papers,
        paragraphs_per_paper: settings.synth.paragraphs_per_paper,
        queries_per_paper: settings.synth.queries_per_paper,
        procedural_signal_ratio: settings.synth.ratio,
        seed: settings.seed,
    };
    let corpus = generate(&params)?;

    let mut w = BufWriter::new(std::fs::File::create(out.path("documents.jsonl"))?);
    for d in &corpus.documents {
        writeln!(w, "{}", serde_json::to_string(d)?)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(std::fs::File::create(out.path("recipes.jsonl"))?);
    for r in &corpus.recipes {
        let record = SynthRecipeRecord {
            paper_id: &r.paper_id,
            n: recipe_ordinal(&r.recipe_id)?,
            text: &r.text,
        };
        writeln!(w, "{}", serde_json::to_string(&record)?)?;
    }
    w.flush()?;

    corpus.queries.save(&out.path("queries.jsonl"))?;
    corpus.qrels.save(&out.path("qrels.txt"))?;

    out.record_output("documents", "documents.jsonl")?;
    out.record_output("recipes", "recipes.jsonl")?;
    out.record_output("queries", "queries.jsonl")?;
    out.record_output("qrels", "qrels.txt")?;
    println!(
        "synth: {} papers, {} chunks, {} recipes, {} queries -> {}",
        corpus.documents.len(),
        corpus.chunks.len(),
        corpus.recipes.len(),
        corpus.queries.queries.len(),
        settings.out.display()
    );
    out.finish("synth", &settings)?;
    Ok(0)
}

// ============================================================================
// ingest
// ============================================================================

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input documents: JSONL of {paper_id, title, body, metadata?}
    #[arg(long)]
    pub docs: PathBuf,
    /// Recipe backend: mock | file | remote
    #[arg(long)]
    pub recipe_backend: Option<String>,
    /// Preextracted summaries: JSONL of {paper_id, n, text} (file backend)
    #[arg(long)]
    pub recipe_file: Option<PathBuf>,
    /// Remote summarization service URL
    #[arg(long)]
    pub recipe_endpoint: Option<String>,
    /// Model name sent to the remote summarization service
    #[arg(long)]
    pub recipe_model: Option<String>,
    /// Summaries per document
    #[arg(long)]
    pub n_r: Option<usize>,
    /// Chunk packing target, in characters
    #[arg(long)]
    pub target_chars: Option<usize>,
    /// Characters of the previous chunk prefixed to the next
    #[arg(long)]
    pub overlap_chars: Option<usize>,
}

pub fn cmd_ingest(mut settings: Settings, args: &IngestArgs) -> CliResult<u8> {
    apply(&mut settings.recipes.backend, args.recipe_backend.clone());
    merge(&mut settings.recipes.file, args.recipe_file.clone());
    merge(&mut settings.recipes.endpoint, args.recipe_endpoint.clone());
    merge(&mut settings.recipes.model, args.recipe_model.clone());
    apply(&mut settings.recipes.n_r, args.n_r);
    apply(&mut settings.chunking.target_chars, args.target_chars);
    apply(&mut settings.chunking.overlap_chars, args.overlap_chars);
    settings.chunking.validate()?;

    require_file("document file", &args.docs)?;
    let mut out = RunDir::claim(&settings.out)?;
    out.record_input("documents", &args.docs)?;
    if settings.recipes.backend == "file" {
        if let Some(path) = &settings.recipes.file {
            require_file("recipe file", path)?;
            out.record_input("recipes", path)?;
        }
    }

    let docs = ingest_documents(&args.docs)?;
    let chunks = map_bounded(&docs, settings.workers, |d| {
        chunk_document(d, &settings.chunking)
    })
    .into_iter()
    .collect::<reciper_core::Result<Vec<_>>>()?
    .into_iter()
    .flatten()
    .collect::<Vec<_>>();

    let backend = build_recipe_backend(&settings.recipes)?;
    let recipes = reciper_core::extract_recipes(
        &docs,
        &*backend,
        settings.recipes.n_r,
        settings.workers,
    )?;

    let stats = persist_corpus(&chunks, &recipes, &out.path("corpus.jsonl"))?;
    let mut file = std::fs::File::create(out.path("stats.json"))?;
    writeln!(file, "{}", serde_json::to_string_pretty(&stats)?)?;

    out.record_output("corpus", "corpus.jsonl")?;
    out.record_output("stats", "stats.json")?;
    println!(
        "ingest: {} documents, {} chunks, {} recipes -> {}",
        stats.n_documents,
        stats.n_chunks,
        stats.n_recipes,
        out.path("corpus.jsonl").display()
    );
    out.finish("ingest", &settings)?;
    Ok(0)
}

// ============================================================================
// index
// ============================================================================

/// Which index to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexKind {
    /// Dense index over paragraph chunks
    Paragraph,
    /// Dense index over recipe summaries
    Recipe,
    /// BM25 inverted index over paragraph chunks
    Lexical,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Corpus file written by `ingest`
    #[arg(long)]
    pub corpus: PathBuf,
    /// Which index to build
    #[arg(long, value_enum)]
    pub view: IndexKind,
    #[command(flatten)]
    pub backend: BackendArgs,
}

/// Canonical artifact name per index kind.
pub fn index_file_name(kind: IndexKind) -> &'static str {
    match kind {
        IndexKind::Paragraph => "dense_paragraph.jsonl",
        IndexKind::Recipe => "dense_recipe.jsonl",
        IndexKind::Lexical => "lexical.jsonl",
    }
}

pub fn cmd_index(mut settings: Settings, args: &IndexArgs) -> CliResult<u8> {
    apply_backend_args(&mut settings, &args.backend);

    require_file("corpus file", &args.corpus)?;
    let mut out = RunDir::claim(&settings.out)?;
    out.record_input("corpus", &args.corpus)?;
    let (chunks, recipes) = load_corpus(&args.corpus)?;
    let name = index_file_name(args.view);

    let n_entries = match args.view {
        IndexKind::Paragraph | IndexKind::Recipe => {
            let items: Vec<IndexItem> = match args.view {
                IndexKind::Paragraph => chunks
                    .iter()
                    .map(|c| IndexItem { item_id: &c.chunk_id, paper_id: &c.paper_id, text: &c.text })
                    .collect(),
                _ => recipes
                    .iter()
                    .map(|r| IndexItem { item_id: &r.recipe_id, paper_id: &r.paper_id, text: &r.text })
                    .collect(),
            };
            let backend = build_embedding_backend(&settings.backend, settings.seed)?;
            let view = if args.view == IndexKind::Paragraph { View::Paragraph } else { View::Recipe };
            let index = build_dense_index(&items, view, &*backend, settings.metric)?;
            persist_dense_index(&index, &out.path(name))?;
            println!(
                "index: dense {view}, {} entries, dim {}, model {} -> {}",
                index.entries.len(),
                index.dim,
                index.model_tag,
                out.path(name).display()
            );
            index.entries.len()
        }
        IndexKind::Lexical => {
            let items: Vec<IndexItem> = chunks
                .iter()
                .map(|c| IndexItem { item_id: &c.chunk_id, paper_id: &c.paper_id, text: &c.text })
                .collect();
            let params = Bm25Params { k1: settings.bm25.k1, b: settings.bm25.b };
            let index = build_lexical_index(&items, params)?;
            persist_lexical_index(&index, &out.path(name))?;
            println!(
                "index: lexical, {} documents, k1 {} b {} -> {}",
                index.n_docs(),
                params.k1,
                params.b,
                out.path(name).display()
            );
            index.n_docs()
        }
    };

    let _ = n_entries;
    out.record_output("index", name)?;
    out.finish("index", &settings)?;
    Ok(0)
}

// ============================================================================
// query
// ============================================================================

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Corpus file written by `ingest` (resolves candidate titles/texts)
    #[arg(long)]
    pub corpus: PathBuf,
    /// One query text (use --queries for a batch)
    #[arg(long, conflicts_with = "queries")]
    pub query: Option<String>,
    /// Query id for --query
    #[arg(long, default_value = "q1", conflicts_with = "queries")]
    pub query_id: String,
    /// Batch queries: JSONL of {query_id, text}
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Dense paragraph index file
    #[arg(long)]
    pub paragraph_index: Option<PathBuf>,
    /// Dense recipe index file
    #[arg(long)]
    pub recipe_index: Option<PathBuf>,
    /// BM25 index file
    #[arg(long)]
    pub lexical_index: Option<PathBuf>,
    /// Assemble a numbered-evidence prompt into each context
    #[arg(long)]
    pub prompt: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

/// Loads a dense index, enforcing the embedding space and warning when the
/// stored metric differs from the configured one (the run's metric wins).
fn load_dense_checked(path: &Path, model_tag: &str, metric: Metric) -> CliResult<DenseIndex> {
    require_file("index file", path)?;
    let mut index = load_dense_index(path, Some(model_tag))?;
    if index.metric != metric {
        log::warn!(
            "index {} stores metric {} but the run is configured for {}; scoring with {}",
            path.display(),
            index.metric,
            metric,
            metric
        );
        index.metric = metric;
    }
    Ok(index)
}

pub fn cmd_query(mut settings: Settings, args: &QueryArgs) -> CliResult<u8> {
    apply_backend_args(&mut settings, &args.backend);

    require_file("corpus file", &args.corpus)?;
    let queries = match (&args.query, &args.queries) {
        (Some(text), None) => QuerySet {
            queries: vec![reciper_core::Query {
                query_id: args.query_id.clone(),
                text: text.clone(),
            }],
        },
        (None, Some(path)) => {
            require_file("query file", path)?;
            QuerySet::load(path)?
        }
        _ => {
            return Err(CliError::usage("pass exactly one of --query or --queries"));
        }
    };

    let mut out = RunDir::claim(&settings.out)?;
    out.record_input("corpus", &args.corpus)?;
    if let Some(path) = &args.queries {
        out.record_input("queries", path)?;
    }

    let (chunks, recipes) = load_corpus(&args.corpus)?;
    let items = build_item_map(&chunks, &recipes);
    let backend = build_embedding_backend(&settings.backend, settings.seed)?;
    let tag = backend.descriptor().model_tag.clone();

    let paragraph = args
        .paragraph_index
        .as_deref()
        .map(|p| load_dense_checked(p, &tag, settings.metric))
        .transpose()?;
    let recipe = args
        .recipe_index
        .as_deref()
        .map(|p| load_dense_checked(p, &tag, settings.metric))
        .transpose()?;
    let lexical = args
        .lexical_index
        .as_deref()
        .map(|p| {
            require_file("index file", p)?;
            Ok::<_, CliError>(load_lexical_index(p)?)
        })
        .transpose()?;
    for (label, path) in [
        ("paragraph_index", &args.paragraph_index),
        ("recipe_index", &args.recipe_index),
        ("lexical_index", &args.lexical_index),
    ] {
        if let Some(p) = path {
            out.record_input(label, p)?;
        }
    }

    let ctx = PipelineContext {
        paragraph_index: paragraph.as_ref(),
        recipe_index: recipe.as_ref(),
        lexical_index: lexical.as_ref(),
        items: &items,
        backend: &*backend,
        params: settings.retrieval,
        rerank: settings.rerank,
        assemble_prompt: args.prompt,
    };
    let evidence = map_bounded(&queries.queries, settings.workers, |q| {
        run_pipeline(&ctx, settings.variant, &q.query_id, &q.text)
    })
    .into_iter()
    .collect::<reciper_core::Result<Vec<_>>>()?;

    let mut w = BufWriter::new(std::fs::File::create(out.path("evidence.jsonl"))?);
    for ev in &evidence {
        let line = ev.to_jsonl()?;
        writeln!(w, "{line}")?;
        println!("{line}");
    }
    w.flush()?;

    let results: Vec<RunResult> = evidence.iter().map(collapse_to_papers).collect();
    write_run(&results, settings.variant.name(), &out.path("run.txt"))?;

    out.record_output("evidence", "evidence.jsonl")?;
    out.record_output("run", "run.txt")?;
    eprintln!(
        "query: {} queries with {} -> {}",
        evidence.len(),
        settings.variant.name(),
        settings.out.display()
    );
    out.finish("query", &settings)?;
    Ok(0)
}

// ============================================================================
// eval
// ============================================================================

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ranking to score: TREC run file written by `query`
    #[arg(long)]
    pub run: PathBuf,
    /// Relevance judgments: TREC qrels file
    #[arg(long)]
    pub qrels: PathBuf,
}

pub fn cmd_eval(settings: Settings, args: &EvalArgs) -> CliResult<u8> {
    require_file("run file", &args.run)?;
    require_file("qrels file", &args.qrels)?;
    let mut out = RunDir::claim(&settings.out)?;
    out.record_input("run", &args.run)?;
    out.record_input("qrels", &args.qrels)?;

    let results = reciper_core::eval::read_run(&args.run)?;
    let qrels = QrelSet::load(&args.qrels)?;
    let report = match evaluate_run(&results, &qrels) {
        Ok(report) => report,
        Err(reciper_core::Error::UndefinedMetric(_)) => {
            // Nothing overlapped: still report how much of the run was
            // skipped so an id mismatch is diagnosable from the output.
            eprintln!(
                "error: no run query matched the qrels; skipped {} run queries",
                results.len()
            );
            return Ok(EXIT_INCOMPLETE);
        }
        Err(e) => return Err(e.into()),
    };

    let mut file = std::fs::File::create(out.path("report.json"))?;
    writeln!(file, "{}", serde_json::to_string_pretty(&report)?)?;
    out.record_output("report", "report.json")?;

    print!("{}", report.table());
    println!("evaluated {} queries ({} skipped)", report.n_evaluated, report.n_skipped);
    out.finish("eval", &settings)?;

    if report.n_skipped > 0 {
        eprintln!(
            "error: {} run queries had no relevance judgments",
            report.n_skipped
        );
        return Ok(EXIT_INCOMPLETE);
    }
    Ok(0)
}

// ============================================================================
// ablate
// ============================================================================

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Corpus file written by `ingest`
    #[arg(long)]
    pub corpus: PathBuf,
    /// Queries: JSONL of {query_id, text}
    #[arg(long)]
    pub queries: PathBuf,
    /// Relevance judgments: TREC qrels file
    #[arg(long)]
    pub qrels: PathBuf,
    /// Variants to run, comma-separated (default: all nine)
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Hashed-backend seeds standing in for embedding backbones
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Hashed-backend dimensionality
    #[arg(long)]
    pub dim: Option<usize>,
}

pub fn cmd_ablate(mut settings: Settings, args: &AblateArgs) -> CliResult<u8> {
    apply(&mut settings.ablate.seeds, args.seeds.clone());
    apply(&mut settings.ablate.dim, args.dim);
    if let Some(names) = &args.variants {
        let parsed = names
            .iter()
            .map(|n| n.parse::<PipelineVariant>())
            .collect::<reciper_core::Result<Vec<_>>>()?;
        settings.ablate.variants = Some(parsed);
    }
    let variants: Vec<PipelineVariant> = settings
        .ablate
        .variants
        .clone()
        .unwrap_or_else(|| PipelineVariant::all().to_vec());

    require_file("corpus file", &args.corpus)?;
    require_file("query file", &args.queries)?;
    require_file("qrels file", &args.qrels)?;
    let mut out = RunDir::claim(&settings.out)?;
    out.record_input("corpus", &args.corpus)?;
    out.record_input("queries", &args.queries)?;
    out.record_input("qrels", &args.qrels)?;

    let (chunks, recipes) = load_corpus(&args.corpus)?;
    let queries = QuerySet::load(&args.queries)?;
    let qrels = QrelSet::load(&args.qrels)?;
    let params = AblationParams {
        seeds: settings.ablate.seeds.clone(),
        dim: settings.ablate.dim,
        metric: settings.metric,
        retrieval: settings.retrieval,
        rerank: settings.rerank,
        workers: settings.workers,
    };
    let grid = run_ablation(&chunks, &recipes, &queries, &qrels, &variants, &params)?;

    let mut text = grid.table();
    let deltas = grid.delta_table();
    if !deltas.is_empty() {
        text.push('\n');
        text.push_str("reciper deltas per seed:\n");
        text.push_str(&deltas);
    }
    let failures = grid.failure_lines();
    if !failures.is_empty() {
        text.push('\n');
        text.push_str(&failures);
    }
    print!("{text}");

    std::fs::write(out.path("table.txt"), &text)?;
    let mut file = std::fs::File::create(out.path("grid.json"))?;
    writeln!(file, "{}", serde_json::to_string_pretty(&grid)?)?;
    out.record_output("table", "table.txt")?;
    out.record_output("grid", "grid.json")?;
    out.finish("ablate", &settings)?;

    if !grid.failures.is_empty() {
        eprintln!("error: {} grid cells failed", grid.failures.len());
        return Ok(EXIT_INCOMPLETE);
    }
    Ok(0)
}
