//! shrinklab: a numerical laboratory for shrinking-target hitting sets
//! `Λ_y = {n : {uₙ·y} ∈ Iₙ}` on the unit circle.
//!
//! The crate builds hitting sets under certified high-precision arithmetic,
//! computes exact preimage measures, covariances and four-fold correlations
//! of the hit indicators, estimates mass dimensions of integer sets, and runs
//! subsequence ergodic averages over a zoo of measure-preserving systems.

pub mod mag;
pub mod dimlab;
pub mod experiments;
pub mod ergolab;
pub mod hitting;
pub mod par;
pub mod measurelab;
pub mod params;
pub mod sequences;
pub mod torus;
pub mod scalar;
pub mod seeding;

pub use mag::Mag;
pub use scalar::{HPScalar, NumError, PrecisionPolicy, Verdict};
pub use seeding::{sub_seed, BitStream};
