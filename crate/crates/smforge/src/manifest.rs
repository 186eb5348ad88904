//! Run manifests: enough provenance to reproduce any output bit-exactly —
//! tool version, seed, the materialized configuration, and a digest of every
//! file the run wrote.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Digest of the materialized config below.
    pub config_sha256: String,
    /// Full configuration with every default filled in.
    pub config: serde_json::Value,
    pub created_unix_s: u64,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<RunManifest> {
        let config = serde_json::to_value(config)?;
        let config_sha256 = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(RunManifest {
            tool: "smforge".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_sha256,
            config,
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Vec::new(),
        })
    }

    /// Record an already-written output file, digesting it from disk.
    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let meta = std::fs::metadata(path)?;
        self.outputs.push(OutputFile {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: sha256_file(path)?,
            bytes: meta.len(),
        });
        Ok(())
    }

    /// Re-hash every recorded output under `dir` and fail on any mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for out in &self.outputs {
            let path = dir.join(&out.path);
            let digest = sha256_file(&path)?;
            if digest != out.sha256 {
                return Err(Error::Format {
                    offset: 0,
                    message: format!("digest mismatch for {}: manifest {} file {digest}", out.path, out.sha256),
                });
            }
        }
        Ok(())
    }

    /// Write `manifest.json` into `dir` and verify all recorded digests.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.verify(dir)?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
