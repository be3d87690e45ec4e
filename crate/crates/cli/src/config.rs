//! Experiment configuration schema.
//!
//! JSON configs are the primary interface (runs carry 10–20 coupled
//! parameters); command-line flags only override seed, output directory, and
//! precision. Unknown fields are rejected with a field-path diagnostic.

use serde::{Deserialize, Serialize};
use shrinklab::dimlab::Window;
use shrinklab::ergolab::{Observable, SystemSpec};
use shrinklab::experiments::XSpec;
use shrinklab::hitting::FractionalOracle;
use shrinklab::params::Dec;
use shrinklab::scalar::PrecisionPolicy;
use shrinklab::sequences::{GrowthSequence, IntegerSet, TargetScheme};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub precision: PrecisionPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitParams {
    pub u: GrowthSequence,
    pub target: TargetScheme,
    pub y: FractionalOracle,
    pub n_max: u64,
    #[serde(default = "default_all", rename = "A")]
    pub restrict: IntegerSet,
}

pub fn default_all() -> IntegerSet {
    IntegerSet::All
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnParams {
    pub u: GrowthSequence,
    pub target: TargetScheme,
    pub window: Window,
    pub seeds: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrParams {
    pub u: GrowthSequence,
    pub target: TargetScheme,
    pub n: u64,
    pub m: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourfoldParams {
    pub u: GrowthSequence,
    pub target: TargetScheme,
    pub indices: [u64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsParams {
    /// "cov", "fourfold", or "mc" (Monte Carlo consistency ensemble)
    pub kind: String,
    pub cases: u64,
    /// cov: largest m (u_m = 2^m); fourfold: largest index
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_limit: Option<u64>,
    /// mc kind only
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimParams {
    #[serde(rename = "A")]
    pub set: IntegerSet,
    pub window: Window,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedParams {
    #[serde(rename = "A")]
    pub set: IntegerSet,
    pub a: Dec,
    pub gammas: Vec<Dec>,
    pub window: Window,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransverseParams {
    #[serde(rename = "A")]
    pub set: IntegerSet,
    pub u: GrowthSequence,
    pub target: TargetScheme,
    pub window: Window,
    pub seeds: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_window: Option<Window>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicParams {
    pub u: GrowthSequence,
    pub target: TargetScheme,
    pub system: SystemSpec,
    pub observable: Observable,
    pub x: XSpec,
    pub m_grid: Vec<u64>,
    pub seeds: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Dec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VPrimeParams {
    pub u: GrowthSequence,
    pub target: TargetScheme,
    pub b: Dec,
    /// horizons 2^log2_min .. 2^log2_max
    pub log2_min: u32,
    pub log2_max: u32,
    pub ensemble: u64,
}

/// Effective sublacunarity exponent for regime flags: declared δ, else the
/// family's structural value.
pub fn effective_delta(u: &GrowthSequence) -> f64 {
    if let Some(d) = &u.delta {
        return d.to_f64();
    }
    match &u.family {
        shrinklab::sequences::SeqFamily::Geometric { .. } => 0.0,
        shrinklab::sequences::SeqFamily::Stretched { b, .. } => 1.0 - b.to_f64(),
        shrinklab::sequences::SeqFamily::Polynomial { .. } => 1.0,
        shrinklab::sequences::SeqFamily::Explicit { .. } => f64::NAN,
    }
}
