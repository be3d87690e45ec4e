//! Run manifests: the resolved config, regime flags, wall time, and a
//! checksum per emitted file. `replay` re-runs the config and compares.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct RegimeFlags {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_plus_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_plus_a_lt_1: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_a_plus_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_a_plus_delta_lt_1: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_plus_a_lt_dim_a: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub config: crate::config::ExperimentConfig,
    pub regime: RegimeFlags,
    pub wall_seconds: f64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn checksum_file(path: &Path) -> std::io::Result<FileEntry> {
    let bytes = fs::read(path)?;
    Ok(FileEntry {
        name: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_hex(&bytes),
    })
}
