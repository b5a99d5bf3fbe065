//! Recipe extraction: turning documents into compact procedural summaries.
//!
//! Extraction is pluggable. The mock backend is a deterministic extractive
//! heuristic for tests and offline runs, the file backend serves precomputed
//! summaries, and the remote backend calls an LLM service over HTTP. All
//! produce exactly `n_r` summaries per document; [`extract_recipes`] fans out
//! across documents with a bounded worker pool and stamps stable recipe ids.

use crate::corpus::{Document, RecipeSummary};
use crate::error::{Error, Result};
use crate::util::{map_bounded, with_retry};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

/// Environment variable holding the bearer token for the remote LLM service.
pub const LLM_TOKEN_ENV: &str = "RECIPER_LLM_TOKEN";

/// A source of procedural summaries.
///
/// `summarize` must return exactly `n_r` non-empty texts for the document,
/// in a deterministic order.
pub trait RecipeBackend: Send + Sync {
    /// Tag recorded on produced summaries ("mock", "file", or a model id).
    fn tag(&self) -> &str;
    fn summarize(&self, doc: &Document, n_r: usize) -> Result<Vec<String>>;
}

/// Extracts `n_r` recipes per document with at most `workers` documents in
/// flight, and returns summaries sorted by (paper_id, recipe ordinal).
///
/// Recipe ids are `"{paper_id}:r{n}"` with `n` counting from 0. Duplicate
/// paper ids in the input fail, as do backends returning the wrong number of
/// summaries or an empty text.
pub fn extract_recipes(
    docs: &[Document],
    backend: &dyn RecipeBackend,
    n_r: usize,
    workers: usize,
) -> Result<Vec<RecipeSummary>> {
    if n_r < 1 {
        return Err(Error::InvalidParam("n_r must be >= 1".into()));
    }
    if workers < 1 {
        return Err(Error::InvalidParam("workers must be >= 1".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for doc in docs {
        if !seen.insert(doc.paper_id.as_str()) {
            return Err(Error::DuplicateId(doc.paper_id.clone()));
        }
    }

    let results = map_bounded(docs, workers, |doc| {
        let texts = backend.summarize(doc, n_r)?;
        if texts.len() != n_r {
            return Err(Error::Backend {
                backend: backend.tag().to_string(),
                id: doc.paper_id.clone(),
                message: format!("returned {} summaries, expected {n_r}", texts.len()),
                retryable: false,
            });
        }
        texts
            .into_iter()
            .enumerate()
            .map(|(n, text)| {
                if text.trim().is_empty() {
                    return Err(Error::Backend {
                        backend: backend.tag().to_string(),
                        id: doc.paper_id.clone(),
                        message: format!("summary {n} is empty"),
                        retryable: false,
                    });
                }
                Ok(RecipeSummary {
                    recipe_id: format!("{}:r{n}", doc.paper_id),
                    paper_id: doc.paper_id.clone(),
                    title: doc.title.clone(),
                    text,
                    extractor_tag: backend.tag().to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()
    });

    let mut out = Vec::with_capacity(docs.len() * n_r);
    for r in results {
        out.extend(r?);
    }
    // Ids within one paper share the "{paper}:r" prefix, so a shorter id is a
    // smaller ordinal; this keeps r2 before r10.
    out.sort_by(|a, b| {
        a.paper_id
            .cmp(&b.paper_id)
            .then(a.recipe_id.len().cmp(&b.recipe_id.len()))
            .then(a.recipe_id.cmp(&b.recipe_id))
    });
    Ok(out)
}

// ============================================================================
// mock backend
// ============================================================================

/// Action verbs that mark a sentence as procedural for the mock extractor.
const ACTION_WORDS: &[&str] = &[
    "add", "anneal", "calcine", "centrifuge", "cool", "deposit", "dissolve", "dry", "etch",
    "heat", "measure", "mix", "prepare", "sinter", "sputter", "stir", "wash",
];

/// Deterministic extractive summarizer: keeps sentences containing an action
/// verb and renders them as numbered steps. No I/O, no randomness; the output
/// is a pure function of the document text.
#[derive(Debug, Clone)]
pub struct MockRecipeBackend {
    max_steps: usize,
}

impl Default for MockRecipeBackend {
    fn default() -> Self {
        MockRecipeBackend { max_steps: 6 }
    }
}

impl MockRecipeBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Caps the number of steps per summary (default 6).
    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n.max(1);
        self
    }
}

fn sentences(body: &str) -> Vec<&str> {
    body.split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn is_procedural(sentence: &str) -> bool {
    crate::rerank::tokenize_stream(sentence)
        .iter()
        .any(|t| ACTION_WORDS.binary_search(&t.as_str()).is_ok())
}

impl RecipeBackend for MockRecipeBackend {
    fn tag(&self) -> &str {
        "mock"
    }

    fn summarize(&self, doc: &Document, n_r: usize) -> Result<Vec<String>> {
        let hits: Vec<&str> =
            sentences(&doc.body).into_iter().filter(|s| is_procedural(s)).collect();
        let fallback = || {
            let prefix: String = doc.body.chars().take(200).collect();
            format!("Step 1: {}.", prefix.split(['.', '!', '?']).next().unwrap_or(&prefix).trim())
        };
        Ok((0..n_r)
            .map(|j| {
                // Summary j takes hits j, j + n_r, j + 2*n_r, ... so summaries
                // partition the procedural sentences.
                let steps: Vec<String> = hits
                    .iter()
                    .skip(j)
                    .step_by(n_r)
                    .take(self.max_steps)
                    .enumerate()
                    .map(|(i, s)| format!("Step {}: {s}.", i + 1))
                    .collect();
                if steps.is_empty() { fallback() } else { steps.join("\n") }
            })
            .collect())
    }
}

// ============================================================================
// file backend
// ============================================================================

#[derive(Debug, Serialize, Deserialize)]
struct FileRecipeRecord {
    paper_id: String,
    /// 0-based recipe ordinal within the paper.
    n: usize,
    text: String,
}

/// Serves precomputed summaries from a JSONL file of
/// `{"paper_id", "n", "text"}` records.
#[derive(Debug)]
pub struct FileRecipeBackend {
    by_key: BTreeMap<(String, usize), String>,
}

impl FileRecipeBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut by_key = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FileRecipeRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if rec.text.trim().is_empty() {
                return Err(Error::MalformedRecord {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: format!("empty summary for {}:r{}", rec.paper_id, rec.n),
                });
            }
            let id = format!("{}:r{}", rec.paper_id, rec.n);
            if by_key.insert((rec.paper_id, rec.n), rec.text).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(FileRecipeBackend { by_key })
    }
}

impl RecipeBackend for FileRecipeBackend {
    fn tag(&self) -> &str {
        "file"
    }

    fn summarize(&self, doc: &Document, n_r: usize) -> Result<Vec<String>> {
        (0..n_r)
            .map(|n| {
                self.by_key
                    .get(&(doc.paper_id.clone(), n))
                    .cloned()
                    .ok_or_else(|| Error::MissingRecipe(format!("{}:r{n}", doc.paper_id)))
            })
            .collect()
    }
}

// ============================================================================
// remote backend
// ============================================================================

#[derive(Debug, Serialize)]
struct RemoteRecipeRequest<'a> {
    model: &'a str,
    prompt: String,
    document_text: &'a str,
}

#[derive(Debug, Deserialize)]
struct RemoteRecipeResponse {
    summary: String,
}

const DEFAULT_PROMPT: &str =
    "Summarize the document's experimental procedure as concise numbered steps.";

/// HTTP summarization client: `POST endpoint {model, prompt, document_text}
/// -> {summary}`, one request per summary. Transport errors and 5xx/429
/// replies are retried with exponential backoff; other failures are
/// permanent.
pub struct RemoteRecipeBackend {
    endpoint: String,
    model: String,
    prompt: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteRecipeBackend {
    pub fn new(endpoint: &str, model: &str, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend {
                backend: "remote-recipe".into(),
                id: String::new(),
                message: e.to_string(),
                retryable: false,
            })?;
        Ok(RemoteRecipeBackend {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            prompt: DEFAULT_PROMPT.to_string(),
            token: std::env::var(LLM_TOKEN_ENV).ok(),
            client,
        })
    }

    /// Overrides the instruction sent with every document.
    pub fn with_prompt(mut self, prompt: &str) -> Self {
        self.prompt = prompt.to_string();
        self
    }

    fn post_one(&self, doc: &Document, n: usize, n_r: usize) -> Result<String> {
        let backend_err = |message: String, retryable: bool| Error::Backend {
            backend: "remote-recipe".into(),
            id: doc.paper_id.clone(),
            message,
            retryable,
        };
        let prompt = if n_r > 1 {
            format!("{} (summary {} of {n_r})", self.prompt, n + 1)
        } else {
            self.prompt.clone()
        };
        let body = RemoteRecipeRequest {
            model: &self.model,
            prompt,
            document_text: &doc.body,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| backend_err(e.to_string(), true))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(backend_err(format!("status {status}"), true));
        }
        if !status.is_success() {
            return Err(backend_err(format!("status {status}"), false));
        }
        let parsed: RemoteRecipeResponse =
            resp.json().map_err(|e| backend_err(format!("bad reply: {e}"), false))?;
        if parsed.summary.trim().is_empty() {
            return Err(backend_err("empty summary".into(), false));
        }
        Ok(parsed.summary)
    }
}

impl RecipeBackend for RemoteRecipeBackend {
    fn tag(&self) -> &str {
        &self.model
    }

    fn summarize(&self, doc: &Document, n_r: usize) -> Result<Vec<String>> {
        (0..n_r)
            .map(|n| with_retry(3, Duration::from_millis(50), || self.post_one(doc, n, n_r)))
            .collect()
    }
}

// ============================================================================
// Tests
// ============================================================================
