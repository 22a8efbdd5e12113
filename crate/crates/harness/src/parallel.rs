//! Replica sharding. Every replica gets its own seed from
//! `derive_seed(root, stream, index)`, workers share nothing, and results come
//! back in index order so reductions are reproducible.

use crate::error::{HarnessError, Result};
use erosion_flow::rng::derive_seed;
use erosion_flow::stats::KahanSum;
use rayon::prelude::*;

pub fn map_replicas<T, F>(root: u64, stream: &str, replicas: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> erosion_flow::Result<T> + Sync,
{
    let out: Vec<erosion_flow::Result<T>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| f(i, derive_seed(root, stream, i)))
        .collect();
    out.into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|source| HarnessError::Replica { index: i as u64, source }))
        .collect()
}

/// Compensated mean in index order.
pub fn ordered_mean(v: &[f64]) -> f64 {
    v.iter().copied().collect::<KahanSum>().value() / v.len() as f64
}
