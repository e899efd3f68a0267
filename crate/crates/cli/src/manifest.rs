//! Run manifests: a JSON record written beside every output file so a run
//! can be reproduced and its artifacts verified.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        }
    }
}

/// Everything that determines a run's output. Holds no timestamps or host
/// details, so equal runs give equal manifests.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub preset: String,
    /// Overrides in the order given on the command line.
    pub overrides: Vec<(String, f64)>,
    pub seed: Option<u64>,
    pub args: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        preset: &str,
        overrides: &[(String, f64)],
        seed: Option<u64>,
        args: Value,
    ) -> Self {
        Self {
            tool: "qkdlab",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            preset: preset.to_string(),
            overrides: overrides.to_vec(),
            seed,
            args,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Path of the manifest that accompanies `output`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::path_for(output);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
