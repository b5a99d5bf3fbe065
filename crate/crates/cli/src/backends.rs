//! Builds embedding and recipe backends from resolved settings.

use crate::config::{BackendSettings, RecipeSettings};
use crate::error::{CliError, CliResult};
use reciper_core::{
    EmbeddingBackend, FileEmbeddingBackend, FileRecipeBackend, HashedEmbeddingBackend,
    MockRecipeBackend, RecipeBackend, RemoteEmbeddingBackend, RemoteRecipeBackend,
};
use std::time::Duration;

fn need<'a, T>(value: &'a Option<T>, backend: &str, what: &str) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| {
        CliError::usage(format!("the {backend} backend needs {what}"))
    })
}

/// Embedding backend for indexing and query embedding. `seed` only matters
/// for the hashed-test backend.
pub fn build_embedding_backend(
    s: &BackendSettings,
    seed: u64,
) -> CliResult<Box<dyn EmbeddingBackend>> {
    match s.name.as_str() {
        "hashed-test" => Ok(Box::new(HashedEmbeddingBackend::new(s.dim, seed)?)),
        "file" => {
            let path = need(&s.vectors, "file", "--vectors (a precomputed-vector file)")?;
            crate::config::require_file("vector file", path)?;
            Ok(Box::new(FileEmbeddingBackend::load(path)?))
        }
        "remote" => {
            let endpoint = need(&s.endpoint, "remote", "--endpoint")?;
            let model = need(&s.model, "remote", "--model")?;
            Ok(Box::new(RemoteEmbeddingBackend::new(
                endpoint,
                model,
                s.dim,
                Duration::from_secs(s.timeout_secs),
            )?))
        }
        other => Err(CliError::usage(format!(
            "unknown embedding backend {other:?} (expected hashed-test|file|remote)"
        ))),
    }
}

/// Recipe-summary backend for ingestion.
pub fn build_recipe_backend(s: &RecipeSettings) -> CliResult<Box<dyn RecipeBackend>> {
    match s.backend.as_str() {
        "mock" => Ok(Box::new(MockRecipeBackend::new())),
        "file" => {
            let path = need(&s.file, "file", "--recipe-file (a preextracted-summary file)")?;
            crate::config::require_file("recipe file", path)?;
            Ok(Box::new(FileRecipeBackend::load(path)?))
        }
        "remote" => {
            let endpoint = need(&s.endpoint, "remote", "--recipe-endpoint")?;
            let model = need(&s.model, "remote", "--recipe-model")?;
            Ok(Box::new(RemoteRecipeBackend::new(
                endpoint,
                model,
                Duration::from_secs(s.timeout_secs),
            )?))
        }
        other => Err(CliError::usage(format!(
            "unknown recipe backend {other:?} (expected mock|file|remote)"
        ))),
    }
}
