//! Run manifests: every command that writes files drops a `manifest.json`
//! at the output root recording the command line, the input and output
//! content hashes, and the wall-clock duration. Re-running a command with
//! identical inputs must reproduce identical output hashes.

use crate::{io_err, Result};
use hvt_core::checksum::bytes_digest;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileHash>,
    /// sha256 over the concatenated input digests, in listed order.
    pub inputs_digest: String,
    pub outputs: Vec<FileHash>,
    pub duration_ms: u128,
}

pub struct ManifestBuilder {
    command: String,
    config: Option<String>,
    seed: Option<u64>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> ManifestBuilder {
        ManifestBuilder {
            command: command.to_string(),
            config: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, path: &Path) -> &mut Self {
        self.config = Some(path.display().to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(hash_file(path, None)?);
        Ok(self)
    }

    /// Record output files, hashed, with paths relative to `root` so that
    /// runs into different directories stay comparable.
    pub fn outputs(&mut self, root: &Path, paths: &[PathBuf]) -> Result<&mut Self> {
        for p in paths {
            self.outputs.push(hash_file(p, Some(root))?);
        }
        Ok(self)
    }

    /// Finalize and write `manifest.json` under `root`.
    pub fn write(&self, root: &Path) -> Result<RunManifest> {
        let mut concat = String::new();
        for fh in &self.inputs {
            concat.push_str(&fh.sha256);
        }
        let manifest = RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            seed: self.seed,
            inputs: self.inputs.clone(),
            inputs_digest: bytes_digest(concat.as_bytes()),
            outputs: self.outputs.clone(),
            duration_ms: self.started.elapsed().as_millis(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .expect("manifest serialization cannot fail");
        let path = root.join("manifest.json");
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(manifest)
    }
}

pub fn hash_file(path: &Path, relative_to: Option<&Path>) -> Result<FileHash> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let shown = match relative_to {
        Some(root) => path.strip_prefix(root).unwrap_or(path).to_path_buf(),
        None => path.to_path_buf(),
    };
    Ok(FileHash {
        path: shown.display().to_string(),
        sha256: bytes_digest(&bytes),
    })
}
