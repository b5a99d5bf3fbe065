//! Embedding backends, distance functions, and the base similarity score.
//!
//! Three backends cover the deployment spectrum: `hashed-test` is a pure
//! deterministic function of (text, dim, seed) for tests and ablations,
//! `file` serves precomputed vectors by item id, and `remote` calls an HTTP
//! embedding service. All of them satisfy the same contract: the output is
//! order-aligned with the input, every value is finite, and every vector has
//! the descriptor's dimensionality.

use crate::error::{Error, Result};
use crate::rerank::tokenize_stream;
use crate::util::{map_bounded, with_retry};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

/// Environment variable holding the bearer token for the remote embedding
/// service.
pub const EMBED_TOKEN_ENV: &str = "RECIPER_EMBED_TOKEN";

/// Distance function used by dense search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `d = 1 - cos(u, v)`, clamped to [0, 2].
    #[default]
    Cosine,
    /// Squared Euclidean distance.
    Sqeuclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Cosine => write!(f, "cosine"),
            Metric::Sqeuclidean => write!(f, "sqeuclidean"),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "sqeuclidean" => Ok(Metric::Sqeuclidean),
            other => Err(Error::InvalidParam(format!(
                "unknown metric {other:?} (expected cosine|sqeuclidean)"
            ))),
        }
    }
}

/// A dense vector. All values are finite; dimensionality is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "embedding contains non-finite value {bad}"
            )));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Identifies an embedding space: backend name, dimensionality, and the tag
/// stamped into index headers so cross-space mixing fails loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBackendDescriptor {
    /// "hashed-test", "file", or "remote".
    pub name: String,
    pub dim: usize,
    pub model_tag: String,
}

/// One unit of embedding work. The id is the lookup key for precomputed
/// vectors; the text feeds computing backends.
#[derive(Debug, Clone, Copy)]
pub struct EmbedInput<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

/// A source of embeddings.
///
/// Implementations must be order-preserving (`out[i]` embeds `inputs[i]`)
/// and must only return finite vectors of `descriptor().dim` values.
pub trait EmbeddingBackend: Send + Sync {
    fn descriptor(&self) -> &EmbeddingBackendDescriptor;
    fn embed_batch(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>>;

    fn embed_one(&self, id: &str, text: &str) -> Result<EmbeddingVector> {
        let mut out = self.embed_batch(&[EmbedInput { id, text }])?;
        out.pop()
            .ok_or_else(|| Error::InvalidParam("backend returned no vector".into()))
    }
}

/// Distance between two vectors under `metric`.
///
/// Symmetric by construction. Cosine distance is clamped to [0, 2]; a
/// zero-norm side yields similarity 0, hence distance 1.
pub fn distance(a: &EmbeddingVector, b: &EmbeddingVector, metric: Metric) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    match metric {
        Metric::Cosine => {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for (x, y) in a.values.iter().zip(&b.values) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                return Ok(1.0);
            }
            let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
            Ok((1.0 - cos).clamp(0.0, 2.0))
        }
        Metric::Sqeuclidean => {
            Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum())
        }
    }
}

/// Cosine similarity in [-1, 1]; used by the recipe threshold screener.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    Ok(1.0 - distance(a, b, Metric::Cosine)?)
}

/// Base relevance score `s = 1 / (1 + d)` for a distance `d >= 0`.
///
/// Strictly decreasing in `d` and maps [0, inf) onto (0, 1].
pub fn base_score(d: f64) -> f64 {
    debug_assert!(d >= 0.0 && d.is_finite(), "distance must be finite and non-negative");
    1.0 / (1.0 + d)
}

fn validate_batch(
    desc: &EmbeddingBackendDescriptor,
    n_inputs: usize,
    out: &[EmbeddingVector],
) -> Result<()> {
    if out.len() != n_inputs {
        return Err(Error::Backend {
            backend: desc.name.clone(),
            id: String::new(),
            message: format!("returned {} vectors for {} inputs", out.len(), n_inputs),
            retryable: false,
        });
    }
    for v in out {
        if v.dim() != desc.dim {
            return Err(Error::DimensionMismatch { left: desc.dim, right: v.dim() });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Backend {
                backend: desc.name.clone(),
                id: String::new(),
                message: "non-finite value in returned vector".into(),
                retryable: false,
            });
        }
    }
    Ok(())
}

// ============================================================================
// hashed-test backend
// ============================================================================

/// Seeded FNV-1a 64-bit. Stable across platforms and releases, which the
/// "pure function of (text, dim, seed)" contract requires.
fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Signed feature-hashing bag of words, L2-normalized.
///
/// Each token hashes to one bucket with sign +/-1; the final vector is a
/// deterministic function of (text, dim, seed) alone. A text with no tokens
/// embeds to the zero vector, and signed cancellation means a non-empty
/// text can also hash to zero (two tokens in one bucket with opposite
/// signs); downstream cosine handles zero vectors by reporting maximal
/// distance.
pub struct HashedEmbeddingBackend {
    descriptor: EmbeddingBackendDescriptor,
    seed: u64,
}

impl HashedEmbeddingBackend {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("embedding dim must be >= 1".into()));
        }
        Ok(HashedEmbeddingBackend {
            descriptor: EmbeddingBackendDescriptor {
                name: "hashed-test".into(),
                dim,
                model_tag: format!("hashed-{dim}-s{seed}"),
            },
            seed,
        })
    }
}

impl EmbeddingBackend for HashedEmbeddingBackend {
    fn descriptor(&self) -> &EmbeddingBackendDescriptor {
        &self.descriptor
    }

    fn embed_batch(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>> {
        let dim = self.descriptor.dim;
        let out: Vec<EmbeddingVector> = inputs
            .iter()
            .map(|input| {
                let mut acc = vec![0.0f64; dim];
                for token in tokenize_stream(input.text) {
                    let h = fnv1a64(token.as_bytes(), self.seed);
                    let bucket = ((h >> 1) % dim as u64) as usize;
                    let sign = if h & 1 == 1 { 1.0 } else { -1.0 };
                    acc[bucket] += sign;
                }
                let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for x in &mut acc {
                        *x /= norm;
                    }
                }
                EmbeddingVector { values: acc }
            })
            .collect();
        validate_batch(&self.descriptor, inputs.len(), &out)?;
        Ok(out)
    }
}

// ============================================================================
// file backend
// ============================================================================

#[derive(Debug, Serialize, Deserialize)]
struct VectorFileHeader {
    dim: usize,
    model_tag: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorRecord {
    id: String,
    values: Vec<f64>,
}

/// Serves precomputed vectors from a JSONL file keyed by item id.
///
/// File layout: one header line `{dim, model_tag}`, then `{id, values}`
/// records. Unknown ids fail with [`Error::MissingVector`].
pub struct FileEmbeddingBackend {
    descriptor: EmbeddingBackendDescriptor,
    vectors: BTreeMap<String, EmbeddingVector>,
}

impl FileEmbeddingBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let display = path.display().to_string();
        let mut lines = reader.lines().enumerate();

        let (_, first) = lines.next().ok_or_else(|| Error::MalformedRecord {
            path: display.clone(),
            line: 1,
            message: "missing vector file header".into(),
        })?;
        let header: VectorFileHeader =
            serde_json::from_str(&first?).map_err(|e| Error::MalformedRecord {
                path: display.clone(),
                line: 1,
                message: format!("bad vector file header: {e}"),
            })?;
        if header.dim == 0 {
            return Err(Error::InvalidParam("vector file declares dim 0".into()));
        }

        let mut vectors = BTreeMap::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: VectorRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    path: display.clone(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if rec.values.len() != header.dim {
                return Err(Error::DimensionMismatch {
                    left: header.dim,
                    right: rec.values.len(),
                });
            }
            let v = EmbeddingVector::new(rec.values)?;
            if vectors.insert(rec.id.clone(), v).is_some() {
                return Err(Error::DuplicateId(rec.id));
            }
        }
        Ok(FileEmbeddingBackend {
            descriptor: EmbeddingBackendDescriptor {
                name: "file".into(),
                dim: header.dim,
                model_tag: header.model_tag,
            },
            vectors,
        })
    }
}

impl EmbeddingBackend for FileEmbeddingBackend {
    fn descriptor(&self) -> &EmbeddingBackendDescriptor {
        &self.descriptor
    }

    fn embed_batch(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>> {
        let out: Vec<EmbeddingVector> = inputs
            .iter()
            .map(|input| {
                self.vectors
                    .get(input.id)
                    .cloned()
                    .ok_or_else(|| Error::MissingVector(input.id.to_string()))
            })
            .collect::<Result<_>>()?;
        validate_batch(&self.descriptor, inputs.len(), &out)?;
        Ok(out)
    }
}

// ============================================================================
// remote backend
// ============================================================================

#[derive(Debug, Serialize)]
struct RemoteEmbedRequest<'a> {
    model: &'a str,
    inputs: Vec<&'a str>,
}

#[derive(Debug, Deserialize)]
struct RemoteEmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP embedding client: `POST endpoint {model, inputs} -> {vectors}`.
///
/// Requests are split into `batch_size` sub-batches with at most
/// `max_in_flight` in flight; transport errors and 5xx/429 replies are
/// retried with exponential backoff.
pub struct RemoteEmbeddingBackend {
    descriptor: EmbeddingBackendDescriptor,
    endpoint: String,
    model: String,
    token: Option<String>,
    batch_size: usize,
    max_in_flight: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbeddingBackend {
    pub fn new(endpoint: &str, model: &str, dim: usize, timeout: Duration) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("embedding dim must be >= 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend {
                backend: "remote".into(),
                id: String::new(),
                message: e.to_string(),
                retryable: false,
            })?;
        Ok(RemoteEmbeddingBackend {
            descriptor: EmbeddingBackendDescriptor {
                name: "remote".into(),
                dim,
                model_tag: model.to_string(),
            },
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            token: std::env::var(EMBED_TOKEN_ENV).ok(),
            batch_size: 32,
            max_in_flight: 4,
            client,
        })
    }

    /// Overrides the in-flight request bound (default 4).
    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.max_in_flight = limit.max(1);
        self
    }

    /// Overrides the per-request batch size (default 32).
    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    fn post_batch(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>> {
        let first_id = inputs.first().map(|i| i.id).unwrap_or_default().to_string();
        let backend_err = |message: String, retryable: bool| Error::Backend {
            backend: "remote-embed".into(),
            id: first_id.clone(),
            message,
            retryable,
        };
        let body = RemoteEmbedRequest {
            model: &self.model,
            inputs: inputs.iter().map(|i| i.text).collect(),
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
        let parsed: RemoteEmbedResponse =
            resp.json().map_err(|e| backend_err(format!("bad reply: {e}"), false))?;
        let out = parsed
            .vectors
            .into_iter()
            .map(EmbeddingVector::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(out)
    }
}

impl EmbeddingBackend for RemoteEmbeddingBackend {
    fn descriptor(&self) -> &EmbeddingBackendDescriptor {
        &self.descriptor
    }

    fn embed_batch(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>> {
        let batches: Vec<&[EmbedInput<'_>]> = inputs.chunks(self.batch_size).collect();
        let results = map_bounded(&batches, self.max_in_flight, |batch| {
            with_retry(3, Duration::from_millis(50), || self.post_batch(batch))
        });
        let mut out = Vec::with_capacity(inputs.len());
        for r in results {
            out.extend(r?);
        }
        validate_batch(&self.descriptor, inputs.len(), &out)?;
        Ok(out)
    }
}

// ============================================================================
// Tests
// ============================================================================
