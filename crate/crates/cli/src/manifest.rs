//! Run manifests: config hash, code version, artifact checksums, and
//! per-stage wall-clock timings. Every file an experiment writes must be
//! registered here; the manifest is persisted even when a stage fails so
//! completed artifacts stay accounted for.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub stages: Vec<StageTiming>,
    /// Set when the run aborted; names the failing stage.
    pub failed_stage: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Accumulates artifacts and timings for one run.
pub struct ManifestBuilder {
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(out_dir: &Path, config_text: &str) -> Self {
        ManifestBuilder {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                config_hash: sha256_hex(config_text.as_bytes()),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                artifacts: Vec::new(),
                stages: Vec::new(),
                failed_stage: None,
            },
        }
    }

    /// Short config-hash prefix for cache file names.
    pub fn hash_prefix(&self) -> String {
        self.manifest.config_hash[..8].to_string()
    }

    /// Register a written file: checksum it and record its size.
    pub fn register(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("checksumming artifact {}", path.display()))?;
        let rel = path.strip_prefix(&self.out_dir).unwrap_or(path);
        self.manifest.artifacts.push(ArtifactEntry {
            path: rel.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Run a named stage, timing it; on failure the manifest (with the
    /// failing stage recorded) is persisted before the error propagates.
    pub fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut ManifestBuilder) -> Result<T>,
    ) -> Result<T> {
        let start = Instant::now();
        match f(self) {
            Ok(v) => {
                self.manifest
                    .stages
                    .push(StageTiming { name: name.into(), seconds: start.elapsed().as_secs_f64() });
                Ok(v)
            }
            Err(e) => {
                self.manifest
                    .stages
                    .push(StageTiming { name: name.into(), seconds: start.elapsed().as_secs_f64() });
                self.manifest.failed_stage = Some(name.into());
                let _ = self.write();
                Err(e.context(format!("stage `{name}` failed")))
            }
        }
    }

    /// Persist the manifest as pretty JSON in the output directory.
    pub fn write(&self) -> Result<PathBuf> {
        let path = self.out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, json)?;
        Ok(path)
    }

    #[allow(dead_code)]
    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }
}
