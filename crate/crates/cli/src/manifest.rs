//! Run manifests: every command writes exactly one `manifest.json` tying
//! its outputs to the resolved configuration, the seed, and SHA-256
//! digests of all inputs and outputs.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Manifest schema version.
pub const ARTIFACT_VERSION: u32 = 1;

/// A file path with its content digest.
#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    /// Path as recorded (inputs verbatim, outputs relative to the run dir).
    pub path: String,
    /// Lowercase hex SHA-256 of the file contents.
    pub sha256: String,
}

/// The record written alongside every command's outputs.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    /// Manifest schema version.
    pub artifact_version: u32,
    /// Command name (`simulate`, `train`, ...).
    pub command: String,
    /// Master seed of the run.
    pub seed: u64,
    /// Fully resolved configuration, defaults included.
    pub config: BTreeMap<String, String>,
    /// Input files with digests.
    pub inputs: Vec<FileDigest>,
    /// Output files with digests.
    pub outputs: Vec<FileDigest>,
    /// Wall-clock duration of the command.
    pub wall_seconds: f64,
}

/// Hex SHA-256 of a file's contents.
pub fn digest_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot digest {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let out = hasher.finalize();
    Ok(out.iter().map(|b| format!("{b:02x}")).collect())
}

/// Digests a file, recording it under the given display path.
pub fn file_digest(display: &str, actual: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: display.to_string(),
        sha256: digest_file(actual)?,
    })
}

/// Writes `manifest.json` into the run directory.
pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(manifest).context("cannot serialize manifest")?;
    text.push('\n');
    let path = dir.join("manifest.json");
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}
