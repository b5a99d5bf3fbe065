//! Layered run configuration.
//!
//! Precedence is CLI flags > config file > built-in defaults. Every command
//! serializes the fully resolved [`Settings`] into its output directory, so
//! a run is reproducible from its artifacts alone.

use crate::error::{CliError, CliResult, EXIT_USAGE};
use reciper_core::{ChunkParams, Metric, PipelineVariant, RerankConfig, RetrievalParams};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

// ============================================================================
// Config file (all fields optional)
// ============================================================================

/// TOML config file shape. Top-level keys mirror the global flags; sections
/// hold per-subsystem knobs. Unknown keys are rejected so typos fail loudly.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub metric: Option<String>,
    pub variant: Option<String>,
    pub lambda: Option<f64>,
    pub kc: Option<usize>,
    pub k: Option<usize>,
    pub tau: Option<f64>,
    pub k_rrf: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendFileSection,
    #[serde(default)]
    pub recipes: RecipeFileSection,
    #[serde(default)]
    pub bm25: Bm25FileSection,
    #[serde(default)]
    pub chunking: ChunkingFileSection,
    #[serde(default)]
    pub synth: SynthFileSection,
    #[serde(default)]
    pub ablate: AblateFileSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendFileSection {
    pub name: Option<String>,
    pub dim: Option<usize>,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub vectors: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeFileSection {
    pub backend: Option<String>,
    pub file: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub n_r: Option<usize>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25FileSection {
    pub k1: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingFileSection {
    pub target_chars: Option<usize>,
    pub overlap_chars: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFileSection {
    pub n_papers: Option<usize>,
    pub paragraphs_per_paper: Option<usize>,
    pub queries_per_paper: Option<usize>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateFileSection {
    pub seeds: Option<Vec<u64>>,
    pub dim: Option<usize>,
    pub variants: Option<Vec<String>>,
}

/// A parsed `--config` file: either the hand-written flat shape or a
/// `resolved_config.toml` emitted by a previous run (recognized by its
/// `[settings]` table), which replays that run's full configuration.
pub enum LoadedConfig {
    Flat(Box<FileConfig>),
    Resolved(Box<Settings>),
}

/// Wrapper matching `resolved_config.toml`; `command` and `[inputs]` are
/// provenance and are ignored on load.
#[derive(Debug, Deserialize)]
struct ResolvedFile {
    settings: Settings,
}

pub fn load_config(path: &Path) -> CliResult<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("config file {}: {e}", path.display())))?;
    let parse_err = |e: toml::de::Error| CliError {
        code: EXIT_USAGE,
        message: format!("config file {}: {e}", path.display()),
    };
    let table: toml::Table = toml::from_str(&text).map_err(parse_err)?;
    if table.contains_key("settings") {
        let resolved: ResolvedFile = toml::from_str(&text).map_err(parse_err)?;
        Ok(LoadedConfig::Resolved(Box::new(resolved.settings)))
    } else {
        Ok(LoadedConfig::Flat(Box::new(toml::from_str(&text).map_err(parse_err)?)))
    }
}

// ============================================================================
// Resolved settings
// ============================================================================

/// How to obtain embeddings. Serialized into the resolved config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSettings {
    /// "hashed-test", "file", or "remote".
    pub name: String,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vectors: Option<PathBuf>,
    pub timeout_secs: u64,
}

/// How to obtain recipe summaries at ingest time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeSettings {
    /// "mock", "file", or "remote".
    pub backend: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub n_r: usize,
    pub timeout_secs: u64,
}

/// Synthetic-corpus shape; the generation seed is the global `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    pub n_papers: usize,
    pub paragraphs_per_paper: usize,
    pub queries_per_paper: usize,
    pub ratio: f64,
}

/// Ablation grid axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateSettings {
    pub seeds: Vec<u64>,
    pub dim: usize,
    /// None means all nine variants.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<PipelineVariant>>,
}

/// BM25 knobs mirrored here so the resolved config pins them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Settings {
    pub k1: f64,
    pub b: f64,
}

/// Everything a run needs, after precedence resolution. Scalar fields sit
/// before the nested sections so TOML serialization stays valid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub workers: usize,
    pub metric: Metric,
    pub variant: PipelineVariant,
    pub out: PathBuf,
    pub retrieval: RetrievalParams,
    pub rerank: RerankConfig,
    pub backend: BackendSettings,
    pub recipes: RecipeSettings,
    pub bm25: Bm25Settings,
    pub chunking: ChunkParams,
    pub synth: SynthSettings,
    pub ablate: AblateSettings,
}

fn parse_with<T: std::str::FromStr<Err = reciper_core::Error>>(
    what: &str,
    value: &str,
) -> CliResult<T> {
    value
        .parse()
        .map_err(|e| CliError::usage(format!("config {what}: {e}")))
}

fn parse_variants(names: &[String]) -> CliResult<Vec<PipelineVariant>> {
    names.iter().map(|n| parse_with("variant", n)).collect()
}

impl Settings {
    /// Built-in defaults with a placeholder `out`; [`Settings::resolve`]
    /// replaces it or rejects the run.
    fn defaults() -> Settings {
        Settings {
            seed: 7,
            workers: 4,
            metric: Metric::Cosine,
            variant: PipelineVariant::Reciper,
            out: PathBuf::new(),
            retrieval: RetrievalParams::default(),
            rerank: RerankConfig::default(),
            backend: BackendSettings {
                name: "hashed-test".into(),
                dim: 256,
                model: None,
                endpoint: None,
                vectors: None,
                timeout_secs: 30,
            },
            recipes: RecipeSettings {
                backend: "mock".into(),
                file: None,
                endpoint: None,
                model: None,
                n_r: 1,
                timeout_secs: 60,
            },
            bm25: Bm25Settings { k1: 1.2, b: 0.75 },
            chunking: ChunkParams::default(),
            synth: SynthSettings {
                n_papers: 50,
                paragraphs_per_paper: 8,
                queries_per_paper: 2,
                ratio: 0.5,
            },
            ablate: AblateSettings { seeds: vec![3, 5, 7, 11], dim: 256, variants: None },
        }
    }

    /// Defaults, overlaid by the config file, overlaid by global flags.
    /// Per-command flags are applied by each command afterwards, keeping the
    /// same precedence.
    pub fn resolve(globals: &crate::GlobalArgs) -> CliResult<Settings> {
        let mut s = Settings::defaults();

        if let Some(path) = &globals.config {
            match load_config(path)? {
                LoadedConfig::Resolved(settings) => s = *settings,
                LoadedConfig::Flat(file) => overlay_file(&mut s, *file)?,
            }
        }

        apply(&mut s.seed, globals.seed);
        apply(&mut s.workers, globals.workers);
        apply(&mut s.metric, globals.metric);
        apply(&mut s.variant, globals.variant);
        apply(&mut s.rerank.lambda, globals.lambda);
        apply(&mut s.retrieval.k_c, globals.kc);
        apply(&mut s.retrieval.k, globals.k);
        if globals.tau.is_some() {
            s.retrieval.tau = globals.tau;
        }
        if let Some(out) = &globals.out {
            s.out = out.clone();
        }

        if s.out.as_os_str().is_empty() {
            return Err(CliError::usage(
                "an output directory is required: pass --out or set `out` in the config file",
            ));
        }
        if s.workers < 1 {
            return Err(CliError::usage("workers must be >= 1"));
        }
        s.retrieval.validate()?;
        s.rerank.validate()?;
        s.chunking.validate()?;
        Ok(s)
    }
}

/// Overlays every value present in a flat config file onto `s`.
fn overlay_file(s: &mut Settings, file: FileConfig) -> CliResult<()> {
    apply(&mut s.seed, file.seed);
    apply(&mut s.workers, file.workers);
    if let Some(m) = &file.metric {
        s.metric = parse_with("metric", m)?;
    }
    if let Some(v) = &file.variant {
        s.variant = parse_with("variant", v)?;
    }
    apply(&mut s.rerank.lambda, file.lambda);
    apply(&mut s.retrieval.k_c, file.kc);
    apply(&mut s.retrieval.k, file.k);
    if file.tau.is_some() {
        s.retrieval.tau = file.tau;
    }
    apply(&mut s.rerank.k_rrf, file.k_rrf);
    if let Some(out) = file.out {
        s.out = out;
    }
    apply(&mut s.backend.name, file.backend.name);
    apply(&mut s.backend.dim, file.backend.dim);
    merge(&mut s.backend.model, file.backend.model);
    merge(&mut s.backend.endpoint, file.backend.endpoint);
    merge(&mut s.backend.vectors, file.backend.vectors);
    apply(&mut s.backend.timeout_secs, file.backend.timeout_secs);
    apply(&mut s.recipes.backend, file.recipes.backend);
    merge(&mut s.recipes.file, file.recipes.file);
    merge(&mut s.recipes.endpoint, file.recipes.endpoint);
    merge(&mut s.recipes.model, file.recipes.model);
    apply(&mut s.recipes.n_r, file.recipes.n_r);
    apply(&mut s.recipes.timeout_secs, file.recipes.timeout_secs);
    apply(&mut s.bm25.k1, file.bm25.k1);
    apply(&mut s.bm25.b, file.bm25.b);
    apply(&mut s.chunking.target_chars, file.chunking.target_chars);
    apply(&mut s.chunking.overlap_chars, file.chunking.overlap_chars);
    apply(&mut s.synth.n_papers, file.synth.n_papers);
    apply(&mut s.synth.paragraphs_per_paper, file.synth.paragraphs_per_paper);
    apply(&mut s.synth.queries_per_paper, file.synth.queries_per_paper);
    apply(&mut s.synth.ratio, file.synth.ratio);
    apply(&mut s.ablate.seeds, file.ablate.seeds);
    apply(&mut s.ablate.dim, file.ablate.dim);
    if let Some(names) = &file.ablate.variants {
        s.ablate.variants = Some(parse_variants(names)?);
    }
    Ok(())
}

/// Overwrites `target` when an override is present.
pub fn apply<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

/// Like [`apply`] for optional settings: `None` means "keep".
pub fn merge<T>(target: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *target = value;
    }
}

/// Fails unless `path` names an existing file; commands call this on every
/// input before doing work.
pub fn require_file(what: &str, path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::io(format!("{what} {} does not exist", path.display())))
    }
}
