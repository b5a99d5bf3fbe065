//! Documents, paragraph chunking, and corpus persistence.
//!
//! A corpus file is JSONL: one header record `{format_version, created_at}`
//! followed by chunk and recipe records tagged with `kind`. Chunking splits a
//! document body on blank-line paragraph boundaries and packs paragraphs
//! greedily toward `target_chars`; a paragraph boundary may overshoot the
//! target by up to 20% when the open chunk is still under 80% of it, so real
//! paragraph breaks are preferred over mid-paragraph cuts. Paragraphs larger
//! than the 120% ceiling are hard-split at whitespace.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Current on-disk corpus format.
pub const CORPUS_FORMAT_VERSION: u32 = 1;

/// One ingested article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    /// Stable non-empty identifier, unique within a corpus.
    pub paper_id: String,
    pub title: String,
    /// Raw body text; non-empty after ingestion.
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

/// A contiguous slice of a document body, produced by [`chunk_document`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphChunk {
    /// `"{paper_id}:{position}"`; unique within a corpus.
    pub chunk_id: String,
    pub paper_id: String,
    /// Title inherited from the parent document.
    pub title: String,
    pub text: String,
    /// 0-based ordinal of this chunk within its document.
    pub position: usize,
}

/// A compact procedural summary of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeSummary {
    /// `"{paper_id}:r{n}"`; unique within a corpus.
    pub recipe_id: String,
    pub paper_id: String,
    /// Title inherited from the parent document.
    pub title: String,
    pub text: String,
    /// Which backend produced the summary (e.g. "file", "mock", or a model id).
    pub extractor_tag: String,
}

/// Corpus-level counts reported by [`persist_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_documents: usize,
    pub n_chunks: usize,
    pub n_recipes: usize,
    /// Chunk text length histogram; key is the bucket's lower bound in chars,
    /// bucket width is [`CHUNK_HISTOGRAM_BUCKET`].
    pub chunk_chars_histogram: BTreeMap<usize, usize>,
}

/// Width of one histogram bucket in characters.
pub const CHUNK_HISTOGRAM_BUCKET: usize = 200;

/// Chunking controls. `target_chars` must exceed `overlap_chars`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub target_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            target_chars: 1200,
            overlap_chars: 0,
        }
    }
}

impl ChunkParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_chars == 0 {
            return Err(Error::InvalidParam("target_chars must be >= 1".into()));
        }
        if self.overlap_chars >= self.target_chars {
            return Err(Error::InvalidParam(format!(
                "overlap_chars ({}) must be smaller than target_chars ({})",
                self.overlap_chars, self.target_chars
            )));
        }
        Ok(())
    }

    /// Hard ceiling on a chunk before overlap is prepended: target + 20%.
    fn max_chars(&self) -> usize {
        self.target_chars + self.target_chars / 5
    }

    /// Below this the open chunk may still absorb an overshooting paragraph.
    fn soft_floor(&self) -> usize {
        self.target_chars - self.target_chars / 5
    }
}

/// Reads documents from a JSONL file of `{paper_id, title, body, metadata?}`
/// records, in file order.
///
/// Fails with [`Error::MalformedRecord`] on unparseable lines or empty
/// `paper_id`/`body`, and [`Error::DuplicateId`] when a `paper_id` repeats.
/// An empty file yields an empty corpus with a warning.
pub fn ingest_documents(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let display = path.display().to_string();
    let mut docs = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRecord {
            path: display.clone(),
            line: idx + 1,
            message,
        };
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if doc.paper_id.is_empty() {
            return Err(malformed("empty paper_id".into()));
        }
        if doc.body.trim().is_empty() {
            return Err(malformed(format!("paper {:?} has an empty body", doc.paper_id)));
        }
        if !seen.insert(doc.paper_id.clone()) {
            return Err(Error::DuplicateId(doc.paper_id));
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        log::warn!("{display}: no documents ingested (empty file)");
    }
    Ok(docs)
}

/// Splits a body into trimmed blank-line paragraphs.
fn paragraphs_of(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n").trim().to_string());
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        out.push(cur.join("\n").trim().to_string());
    }
    out.retain(|p| !p.is_empty());
    out
}

/// Splits one oversized paragraph into pieces of at most `target` chars,
/// cutting at the last whitespace inside the window when one exists.
fn hard_split(paragraph: &str, target: usize) -> Vec<String> {
    let chars: Vec<char> = paragraph.chars().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let remaining = chars.len() - start;
        if remaining <= target {
            pieces.push(chars[start..].iter().collect::<String>().trim().to_string());
            break;
        }
        let window_end = start + target;
        let cut = chars[start..window_end]
            .iter()
            .rposition(|c| c.is_whitespace())
            .map(|w| start + w)
            .filter(|&w| w > start);
        match cut {
            Some(w) => {
                pieces.push(chars[start..w].iter().collect::<String>().trim().to_string());
                start = w + 1;
            }
            None => {
                pieces.push(chars[start..window_end].iter().collect());
                start = window_end;
            }
        }
    }
    pieces.retain(|p| !p.is_empty());
    pieces
}

/// Last `n` chars of `s` (whole string if shorter).
fn suffix_chars(s: &str, n: usize) -> String {
    let chars: Vec<char> = s.chars().collect();
    let start = chars.len().saturating_sub(n);
    chars[start..].iter().collect()
}

/// Splits a document body into ordered [`ParagraphChunk`]s.
///
/// Deterministic: the same document and params always produce the same
/// chunks. Concatenating chunk texts with each chunk's overlap prefix removed
/// reconstructs the body modulo whitespace. A whitespace-only body produces
/// no chunks and logs a warning.
pub fn chunk_document(doc: &Document, params: &ChunkParams) -> Result<Vec<ParagraphChunk>> {
    params.validate()?;
    let paragraphs = paragraphs_of(&doc.body);
    if paragraphs.is_empty() {
        log::warn!("paper {:?}: empty body, no chunks produced", doc.paper_id);
        return Ok(Vec::new());
    }

    let max = params.max_chars();
    let floor = params.soft_floor();
    let target = params.target_chars;

    // Greedy packing over paragraph units. `cur` is the open chunk.
    let mut texts: Vec<String> = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, texts: &mut Vec<String>| {
        if !cur.is_empty() {
            texts.push(std::mem::take(cur));
        }
    };
    for para in &paragraphs {
        let plen = para.chars().count();
        if plen > max {
            flush(&mut cur, &mut texts);
            let mut pieces = hard_split(para, target);
            // The final short piece stays open so following paragraphs can
            // pack against it.
            let last = pieces.pop().expect("oversized paragraph yields pieces");
            texts.extend(pieces);
            cur = last;
            continue;
        }
        if cur.is_empty() {
            cur = para.clone();
            continue;
        }
        let cur_len = cur.chars().count();
        let projected = cur_len + 2 + plen;
        if projected <= target || (projected <= max && cur_len < floor) {
            cur.push_str("\n\n");
            cur.push_str(para);
        } else {
            flush(&mut cur, &mut texts);
            cur = para.clone();
        }
    }
    flush(&mut cur, &mut texts);

    // Overlap prefixes are applied after packing so packing decisions are
    // independent of the overlap setting. Each prefix is the last
    // overlap_chars chars of the previous chunk as emitted, so stripping
    // min(overlap_chars, previous emitted length) chars reconstructs exactly.
    let mut emitted: Vec<String> = Vec::with_capacity(texts.len());
    for (position, text) in texts.iter().enumerate() {
        if position > 0 && params.overlap_chars > 0 {
            let mut t = suffix_chars(&emitted[position - 1], params.overlap_chars);
            t.push_str(text);
            emitted.push(t);
        } else {
            emitted.push(text.clone());
        }
    }
    let chunks = emitted
        .into_iter()
        .enumerate()
        .map(|(position, text)| ParagraphChunk {
            chunk_id: format!("{}:{}", doc.paper_id, position),
            paper_id: doc.paper_id.clone(),
            title: doc.title.clone(),
            text,
            position,
        })
        .collect();
    Ok(chunks)
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    format_version: u32,
    created_at: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CorpusRecord {
    Chunk(ParagraphChunk),
    Recipe(RecipeSummary),
}

/// Writes chunks and recipes to one JSONL corpus file and returns counts.
///
/// Records are written in canonical order: chunks by (paper_id, position),
/// then recipes by (paper_id, recipe_id). Every recipe must reference a paper
/// that also has chunks.
pub fn persist_corpus(
    chunks: &[ParagraphChunk],
    recipes: &[RecipeSummary],
    path: &Path,
) -> Result<CorpusStats> {
    let chunk_papers: BTreeSet<&str> = chunks.iter().map(|c| c.paper_id.as_str()).collect();
    for r in recipes {
        if !chunk_papers.contains(r.paper_id.as_str()) {
            return Err(Error::InvalidParam(format!(
                "recipe {:?} references paper {:?} with no chunks",
                r.recipe_id, r.paper_id
            )));
        }
    }

    let mut sorted_chunks: Vec<&ParagraphChunk> = chunks.iter().collect();
    sorted_chunks.sort_by(|a, b| (&a.paper_id, a.position).cmp(&(&b.paper_id, b.position)));
    let mut sorted_recipes: Vec<&RecipeSummary> = recipes.iter().collect();
    sorted_recipes.sort_by(|a, b| (&a.paper_id, &a.recipe_id).cmp(&(&b.paper_id, &b.recipe_id)));

    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = CorpusHeader {
        format_version: CORPUS_FORMAT_VERSION,
        created_at: chrono::Utc::now().to_rfc3339(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for c in &sorted_chunks {
        writeln!(w, "{}", serde_json::to_string(&CorpusRecord::Chunk((*c).clone()))?)?;
    }
    for r in &sorted_recipes {
        writeln!(w, "{}", serde_json::to_string(&CorpusRecord::Recipe((*r).clone()))?)?;
    }
    w.flush()?;

    let mut histogram = BTreeMap::new();
    for c in chunks {
        let bucket = (c.text.chars().count() / CHUNK_HISTOGRAM_BUCKET) * CHUNK_HISTOGRAM_BUCKET;
        *histogram.entry(bucket).or_insert(0) += 1;
    }
    let mut papers: BTreeSet<&str> = chunk_papers;
    papers.extend(recipes.iter().map(|r| r.paper_id.as_str()));
    Ok(CorpusStats {
        n_documents: papers.len(),
        n_chunks: chunks.len(),
        n_recipes: recipes.len(),
        chunk_chars_histogram: histogram,
    })
}

/// Reads a corpus file written by [`persist_corpus`].
///
/// Fails with [`Error::VersionMismatch`] when the header declares a format
/// version this build does not read.
pub fn load_corpus(path: &Path) -> Result<(Vec<ParagraphChunk>, Vec<RecipeSummary>)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let display = path.display().to_string();
    let mut lines = reader.lines().enumerate();

    let (_, header_line) = lines.next().ok_or_else(|| Error::MalformedRecord {
        path: display.clone(),
        line: 1,
        message: "missing corpus header".into(),
    })?;
    let header: CorpusHeader =
        serde_json::from_str(&header_line?).map_err(|e| Error::MalformedRecord {
            path: display.clone(),
            line: 1,
            message: format!("bad corpus header: {e}"),
        })?;
    if header.format_version != CORPUS_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CORPUS_FORMAT_VERSION,
            found: header.format_version,
        });
    }

    let mut chunks = Vec::new();
    let mut recipes = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: display.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        match record {
            CorpusRecord::Chunk(c) => chunks.push(c),
            CorpusRecord::Recipe(r) => recipes.push(r),
        }
    }
    Ok((chunks, recipes))
}

// ============================================================================
// Tests
// ============================================================================
