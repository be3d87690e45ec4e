//! Data-parallel map with a sequential fallback.
//!
//! Ensemble members, grid cases, and Monte Carlo batches are independent, so
//! every parallel site in the crate is an ordered map over an index range.
//! Outputs are collected in input order and reduced sequentially, which keeps
//! results bit-identical with and without the `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Ordered parallel map (sequential when the `parallel` feature is off).
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Always-sequential map; benchmark baseline for the parallel path.
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Ordered map over an index range.
pub fn par_map_range<U, F>(n: u64, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(u64) -> U + Sync + Send,
{
    par_map((0..n).collect(), f)
}
