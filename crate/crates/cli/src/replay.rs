//! Replay verification: re-run a manifest's config and compare artifact
//! checksums. With precision overrides the byte comparison is relaxed to a
//! numeric cross-precision comparison.

use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;
use crate::runner::{run, RunError};
use std::fs;
use std::path::Path;

#[derive(Debug, PartialEq, Eq)]
pub enum ReplayStatus {
    ExactMatch,
    TolerantMatch,
    Mismatch(String),
}

pub fn replay(
    manifest_path: &Path,
    work_bits: Option<u32>,
    guard_bits: Option<u32>,
) -> Result<ReplayStatus, RunError> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("manifest: {e}")))?;
    let base_dir = manifest_path
        .parent()
        .ok_or_else(|| RunError::Config("manifest has no parent directory".into()))?;

    let mut config: ExperimentConfig = manifest.config.clone();
    let precision_changed = work_bits.is_some() || guard_bits.is_some();
    if let Some(w) = work_bits {
        config.precision.work_bits = w;
    }
    if let Some(g) = guard_bits {
        config.precision.guard_bits = g;
    }

    let replay_dir = base_dir.join(".replay");
    let out = run(&config, &replay_dir)?;

    let mut tolerant = false;
    for original in &manifest.files {
        let fresh = out
            .manifest
            .files
            .iter()
            .find(|f| f.name == original.name)
            .ok_or_else(|| RunError::Config(format!("replay missing artifact {}", original.name)))?;
        if fresh.sha256 == original.sha256 {
            continue;
        }
        if !precision_changed {
            return Ok(ReplayStatus::Mismatch(format!(
                "checksum mismatch on {}: {} vs {}",
                original.name, original.sha256, fresh.sha256
            )));
        }
        // cross-precision numeric comparison
        let tol = 8.0
            * 2f64.powi(
                -(manifest
                    .config
                    .precision
                    .guard_bits
                    .min(config.precision.guard_bits) as i32),
            );
        let old = fs::read_to_string(base_dir.join(&original.name))?;
        let new = fs::read_to_string(replay_dir.join(&original.name))?;
        match numeric_compare(&old, &new, tol) {
            Ok(()) => tolerant = true,
            Err(msg) => {
                return Ok(ReplayStatus::Mismatch(format!(
                    "{}: {msg}",
                    original.name
                )))
            }
        }
    }
    Ok(if tolerant {
        ReplayStatus::TolerantMatch
    } else {
        ReplayStatus::ExactMatch
    })
}

/// Token-wise comparison: numeric tokens must agree within `tol` (absolute)
/// or 1e-9 relative; everything else must match exactly.
fn numeric_compare(old: &str, new: &str, tol: f64) -> Result<(), String> {
    let tokens = |s: &str| -> Vec<String> {
        s.split(|c: char| c == ',' || c.is_whitespace() || c == ':' || c == '"')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    };
    let a = tokens(old);
    let b = tokens(new);
    if a.len() != b.len() {
        return Err(format!("token count {} vs {}", a.len(), b.len()));
    }
    for (x, y) in a.iter().zip(&b) {
        if x == y {
            continue;
        }
        match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(xv), Ok(yv)) => {
                let close = (xv - yv).abs() <= tol
                    || (xv - yv).abs() <= 1e-9 * xv.abs().max(yv.abs());
                if !close {
                    return Err(format!("numeric drift {x} vs {y} beyond tolerance {tol:e}"));
                }
            }
            _ => return Err(format!("token mismatch {x:?} vs {y:?}")),
        }
    }
    Ok(())
}
