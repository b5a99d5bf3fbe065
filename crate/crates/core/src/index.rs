//! Exact dense indexes and the BM25 lexical index.
//!
//! Dense search is an exhaustive scan: corpora here are thousands of items,
//! where approximate neighbors buy nothing and cost determinism. Index files
//! are JSONL with a header carrying `format_version`, `model_tag`, and the
//! metric, so loading an index built in a different embedding space fails
//! loudly instead of silently scoring garbage.

use crate::embedding::{base_score, distance, EmbedInput, EmbeddingBackend, Metric};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::rerank::tokenize_stream;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Current on-disk index format.
pub const INDEX_FORMAT_VERSION: u32 = 1;

/// Which item family an index covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Paragraph,
    Recipe,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            View::Paragraph => write!(f, "paragraph"),
            View::Recipe => write!(f, "recipe"),
        }
    }
}

impl std::str::FromStr for View {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paragraph" => Ok(View::Paragraph),
            "recipe" => Ok(View::Recipe),
            other => Err(Error::InvalidParam(format!(
                "unknown view {other:?} (expected paragraph|recipe)"
            ))),
        }
    }
}

/// Borrowed (id, paper, text) triple fed to index builders.
#[derive(Debug, Clone, Copy)]
pub struct IndexItem<'a> {
    pub item_id: &'a str,
    pub paper_id: &'a str,
    pub text: &'a str,
}

/// One stored vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseEntry {
    pub item_id: String,
    pub paper_id: String,
    pub vector: EmbeddingVector,
}

/// An exact-scan dense index over one view.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub view: View,
    pub model_tag: String,
    pub metric: Metric,
    pub dim: usize,
    /// Sorted by item_id; all vectors have `dim` values.
    pub entries: Vec<DenseEntry>,
}

/// A scored search result.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub item_id: String,
    pub paper_id: String,
    pub s: f64,
}

/// Embeds every item with `backend` and assembles a dense index.
///
/// Entries end up sorted by item_id regardless of input order. Duplicate
/// item ids are rejected.
pub fn build_dense_index(
    items: &[IndexItem<'_>],
    view: View,
    backend: &dyn EmbeddingBackend,
    metric: Metric,
) -> Result<DenseIndex> {
    let mut seen = BTreeSet::new();
    for it in items {
        if !seen.insert(it.item_id) {
            return Err(Error::DuplicateId(it.item_id.to_string()));
        }
    }
    let inputs: Vec<EmbedInput<'_>> =
        items.iter().map(|it| EmbedInput { id: it.item_id, text: it.text }).collect();
    let vectors = backend.embed_batch(&inputs)?;
    let mut entries: Vec<DenseEntry> = items
        .iter()
        .zip(vectors)
        .map(|(it, vector)| DenseEntry {
            item_id: it.item_id.to_string(),
            paper_id: it.paper_id.to_string(),
            vector,
        })
        .collect();
    entries.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    Ok(DenseIndex {
        view,
        model_tag: backend.descriptor().model_tag.clone(),
        metric,
        dim: backend.descriptor().dim,
        entries,
    })
}

impl DenseIndex {
    /// Exhaustive scan: scores every entry with `base_score(distance)` and
    /// returns the top `k` by score, ties broken by ascending item_id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: query.dim() });
        }
        let mut hits: Vec<SearchHit> = self
            .entries
            .iter()
            .map(|e| {
                let d = distance(query, &e.vector, self.metric)?;
                Ok(SearchHit {
                    item_id: e.item_id.clone(),
                    paper_id: e.paper_id.clone(),
                    s: base_score(d),
                })
            })
            .collect::<Result<_>>()?;
        hits.sort_by(|a, b| {
            b.s.partial_cmp(&a.s)
                .expect("scores are finite")
                .then(a.item_id.cmp(&b.item_id))
        });
        hits.truncate(k);
        Ok(hits)
    }
}

/// Free-function form of [`DenseIndex::search`].
pub fn dense_search(index: &DenseIndex, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>> {
    index.search(query, k)
}

// ============================================================================
// BM25 lexical index
// ============================================================================

/// Okapi BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !self.k1.is_finite() || self.k1 < 0.0 {
            return Err(Error::InvalidParam(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !self.b.is_finite() || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParam(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Inverted index with BM25 scoring.
///
/// Postings are kept sorted by item_id and the query loop iterates tokens in
/// sorted order, so scores are bit-identical regardless of document insertion
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    pub params: Bm25Params,
    /// token -> [(item_id, term frequency)], sorted by item_id.
    postings: BTreeMap<String, Vec<(String, usize)>>,
    /// item_id -> token count. Consistent with postings: a document's length
    /// is the sum of its term frequencies.
    doc_lengths: BTreeMap<String, usize>,
    avg_doc_length: f64,
}

/// Tokenizes every item with the system tokenizer and builds the index.
pub fn build_lexical_index(items: &[IndexItem<'_>], params: Bm25Params) -> Result<LexicalIndex> {
    params.validate()?;
    let mut postings: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    let mut doc_lengths: BTreeMap<String, usize> = BTreeMap::new();
    for it in items {
        let tokens = tokenize_stream(it.text);
        if doc_lengths.insert(it.item_id.to_string(), tokens.len()).is_some() {
            return Err(Error::DuplicateId(it.item_id.to_string()));
        }
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        for (token, count) in tf {
            postings.entry(token).or_default().push((it.item_id.to_string(), count));
        }
    }
    for list in postings.values_mut() {
        list.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let n = doc_lengths.len();
    let avg_doc_length = if n == 0 {
        0.0
    } else {
        doc_lengths.values().sum::<usize>() as f64 / n as f64
    };
    Ok(LexicalIndex { params, postings, doc_lengths, avg_doc_length })
}

impl LexicalIndex {
    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    /// Okapi BM25 over unique query tokens:
    /// `score(d) = sum_t idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avgdl))`
    /// with the smoothed `idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5))`, which
    /// stays positive for every df. Returns the top `k` matching documents
    /// by score, ties broken by ascending item_id; documents sharing no token
    /// with the query are never returned.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let n = self.n_docs();
        if n == 0 || k == 0 {
            return Vec::new();
        }
        let q_tokens: BTreeSet<String> = tokenize_stream(query).into_iter().collect();
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for token in &q_tokens {
            let Some(list) = self.postings.get(token) else { continue };
            let df = list.len() as f64;
            let idf = (1.0 + (n as f64 - df + 0.5) / (df + 0.5)).ln();
            for (item_id, tf) in list {
                let len = self.doc_lengths[item_id] as f64;
                let tf = *tf as f64;
                let norm = tf + self.params.k1
                    * (1.0 - self.params.b + self.params.b * len / self.avg_doc_length);
                let term = idf * tf * (self.params.k1 + 1.0) / norm;
                *scores.entry(item_id.as_str()).or_insert(0.0) += term;
            }
        }
        let mut hits: Vec<(String, f64)> =
            scores.into_iter().map(|(id, s)| (id.to_string(), s)).collect();
        hits.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("scores are finite")
                .then(a.0.cmp(&b.0))
        });
        hits.truncate(k);
        hits
    }
}

/// Free-function form of [`LexicalIndex::search`].
pub fn bm25_search(index: &LexicalIndex, query: &str, k: usize) -> Vec<(String, f64)> {
    index.search(query, k)
}

// ============================================================================
// Persistence
// ============================================================================

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    format_version: u32,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    view: Option<View>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric: Option<Metric>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DenseIndexRecord {
    item_id: String,
    paper_id: String,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LexicalIndexBody {
    params: Bm25Params,
    postings: BTreeMap<String, Vec<(String, usize)>>,
    doc_lengths: BTreeMap<String, usize>,
}

/// Writes a dense index as JSONL: header, then one record per entry.
pub fn persist_dense_index(index: &DenseIndex, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = IndexHeader {
        format_version: INDEX_FORMAT_VERSION,
        kind: "dense".into(),
        view: Some(index.view),
        dim: Some(index.dim),
        model_tag: Some(index.model_tag.clone()),
        metric: Some(index.metric),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for e in &index.entries {
        let rec = DenseIndexRecord {
            item_id: e.item_id.clone(),
            paper_id: e.paper_id.clone(),
            values: e.vector.values.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec)?)?;
    }
    w.flush()?;
    Ok(())
}

fn read_header(path: &Path, line: Option<std::io::Result<String>>) -> Result<IndexHeader> {
    let display = path.display().to_string();
    let first = line.ok_or_else(|| Error::MalformedRecord {
        path: display.clone(),
        line: 1,
        message: "missing index header".into(),
    })??;
    let header: IndexHeader =
        serde_json::from_str(&first).map_err(|e| Error::MalformedRecord {
            path: display,
            line: 1,
            message: format!("bad index header: {e}"),
        })?;
    if header.format_version != INDEX_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: INDEX_FORMAT_VERSION,
            found: header.format_version,
        });
    }
    Ok(header)
}

/// Reads a dense index, verifying the header against `expected_model_tag`
/// when given. A tag mismatch is a hard error: the vectors live in a
/// different embedding space.
pub fn load_dense_index(path: &Path, expected_model_tag: Option<&str>) -> Result<DenseIndex> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let display = path.display().to_string();
    let mut lines = reader.lines();
    let header = read_header(path, lines.next())?;
    let missing = |field: &str| Error::MalformedRecord {
        path: display.clone(),
        line: 1,
        message: format!("dense index header lacks {field}"),
    };
    if header.kind != "dense" {
        return Err(missing("kind=dense"));
    }
    let view = header.view.ok_or_else(|| missing("view"))?;
    let dim = header.dim.ok_or_else(|| missing("dim"))?;
    let model_tag = header.model_tag.ok_or_else(|| missing("model_tag"))?;
    let metric = header.metric.ok_or_else(|| missing("metric"))?;
    if let Some(expected) = expected_model_tag {
        if expected != model_tag {
            return Err(Error::ModelTagMismatch {
                expected: expected.to_string(),
                found: model_tag,
            });
        }
    }

    let mut entries = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DenseIndexRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: display.clone(),
                line: idx + 2,
                message: e.to_string(),
            })?;
        if rec.values.len() != dim {
            return Err(Error::DimensionMismatch { left: dim, right: rec.values.len() });
        }
        entries.push(DenseEntry {
            item_id: rec.item_id,
            paper_id: rec.paper_id,
            vector: EmbeddingVector::new(rec.values)?,
        });
    }
    entries.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    Ok(DenseIndex { view, model_tag, metric, dim, entries })
}

/// Writes a lexical index as JSONL: header line, then one body line.
pub fn persist_lexical_index(index: &LexicalIndex, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = IndexHeader {
        format_version: INDEX_FORMAT_VERSION,
        kind: "lexical".into(),
        view: None,
        dim: None,
        model_tag: None,
        metric: None,
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    let body = LexicalIndexBody {
        params: index.params,
        postings: index.postings.clone(),
        doc_lengths: index.doc_lengths.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&body)?)?;
    w.flush()?;
    Ok(())
}

/// Reads a lexical index written by [`persist_lexical_index`].
pub fn load_lexical_index(path: &Path) -> Result<LexicalIndex> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let display = path.display().to_string();
    let mut lines = reader.lines();
    let header = read_header(path, lines.next())?;
    if header.kind != "lexical" {
        return Err(Error::MalformedRecord {
            path: display.clone(),
            line: 1,
            message: "expected a lexical index header".into(),
        });
    }
    let body_line = lines.next().ok_or_else(|| Error::MalformedRecord {
        path: display.clone(),
        line: 2,
        message: "missing lexical index body".into(),
    })??;
    let body: LexicalIndexBody =
        serde_json::from_str(&body_line).map_err(|e| Error::MalformedRecord {
            path: display,
            line: 2,
            message: e.to_string(),
        })?;
    body.params.validate()?;
    let n = body.doc_lengths.len();
    let avg = if n == 0 {
        0.0
    } else {
        body.doc_lengths.values().sum::<usize>() as f64 / n as f64
    };
    Ok(LexicalIndex {
        params: body.params,
        postings: body.postings,
        doc_lengths: body.doc_lengths,
        avg_doc_length: avg,
    })
}

// ============================================================================
// Tests
// ============================================================================
