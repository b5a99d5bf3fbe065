//! Run-directory plumbing shared by every command.
//!
//! A command claims its output directory (rejecting concurrent invocations
//! via a lock file), writes its artifacts, then finishes by serializing the
//! resolved config and a machine-readable manifest of input/output hashes.
//! Nothing here embeds a timestamp, so a rerun with identical inputs and
//! settings produces byte-identical artifacts.

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const LOCK_FILE: &str = ".reciper.lock";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct ManifestEntry {
    label: String,
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'static str,
    corpus_format_version: u32,
    index_format_version: u32,
    inputs: &'a [ManifestEntry],
    outputs: &'a [ManifestEntry],
}

/// Resolved-config document: the command, its input paths, and the full
/// settings the run executed with.
#[derive(Debug, Serialize)]
struct ResolvedConfig<'a> {
    command: &'a str,
    settings: &'a Settings,
    inputs: std::collections::BTreeMap<String, String>,
}

/// A claimed output directory. Dropping it releases the lock.
pub struct RunDir {
    root: PathBuf,
    lock_path: PathBuf,
    inputs: Vec<ManifestEntry>,
    outputs: Vec<ManifestEntry>,
}

fn sha256_file(path: &Path) -> CliResult<(String, u64)> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::io(format!("hashing {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((hex, bytes.len() as u64))
}

impl RunDir {
    /// Creates the directory if needed and takes its lock; a held lock means
    /// another invocation is writing here.
    pub fn claim(root: &Path) -> CliResult<RunDir> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::io(format!("creating {}: {e}", root.display())))?;
        let lock_path = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(_) => Ok(RunDir {
                root: root.to_path_buf(),
                lock_path,
                inputs: Vec::new(),
                outputs: Vec::new(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::locked(format!(
                    "output directory {} is locked by another invocation (stale? remove {})",
                    root.display(),
                    lock_path.display()
                )))
            }
            Err(e) => Err(CliError::io(format!("locking {}: {e}", root.display()))),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Hashes an input file into the manifest. Call after validating the
    /// path exists.
    pub fn record_input(&mut self, label: &str, path: &Path) -> CliResult<()> {
        let (sha256, bytes) = sha256_file(path)?;
        self.inputs.push(ManifestEntry {
            label: label.to_string(),
            path: path.display().to_string(),
            sha256,
            bytes,
        });
        Ok(())
    }

    /// Hashes a just-written artifact (named relative to the run directory)
    /// into the manifest.
    pub fn record_output(&mut self, label: &str, name: &str) -> CliResult<()> {
        let path = self.path(name);
        let (sha256, bytes) = sha256_file(&path)?;
        self.outputs.push(ManifestEntry { label: label.to_string(), path: name.to_string(), sha256, bytes });
        Ok(())
    }

    /// Writes `resolved_config.toml` and `manifest.json`, in that order, so
    /// the manifest covers the config too.
    pub fn finish(mut self, command: &str, settings: &Settings) -> CliResult<()> {
        let inputs: std::collections::BTreeMap<String, String> =
            self.inputs.iter().map(|e| (e.label.clone(), e.path.clone())).collect();
        let resolved = ResolvedConfig { command, settings, inputs };
        let toml_text = toml::to_string_pretty(&resolved)
            .map_err(|e| CliError::usage(format!("serializing resolved config: {e}")))?;
        fs::write(self.path(RESOLVED_CONFIG_FILE), toml_text)?;
        self.record_output("resolved_config", RESOLVED_CONFIG_FILE)?;

        let manifest = Manifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            corpus_format_version: reciper_core::corpus::CORPUS_FORMAT_VERSION,
            index_format_version: reciper_core::index::INDEX_FORMAT_VERSION,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut file = fs::File::create(self.path(MANIFEST_FILE))?;
        writeln!(file, "{}", serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock_path);
    }
}
