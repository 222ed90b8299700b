//! Independent replicates with seeds split deterministically from one base
//! seed, so serial and parallel execution produce identical samples.

use rayon::prelude::*;

use super::{simulate_sigma, ModelParams, SimOptions};
use crate::error::{Error, Result};
use crate::stats::EmpiricalSample;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of replicate `index`: the `index`-th output of a SplitMix64
/// generator whose state starts at `base_seed`, i.e.
/// `mix(base_seed + (index + 1) * 0x9E3779B97F4A7C15)` with the SplitMix64
/// finaliser `mix`.
pub fn replicate_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplicateOptions {
    /// Worker threads; `None` uses the global rayon pool, `Some(1)` runs serially.
    pub workers: Option<usize>,
}

/// Evaluates `f(replicate_seed(base_seed, i))` for `i in 0..n`, returning
/// results in index order whatever the worker count.
pub fn map_replicates<T, F>(n: usize, base_seed: u64, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let seeds: Vec<u64> = (0..n as u64).map(|i| replicate_seed(base_seed, i)).collect();
    match workers {
        Some(1) => seeds.into_iter().map(f).collect(),
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| seeds.into_par_iter().map(&f).collect()),
            Err(_) => seeds.into_iter().map(f).collect(),
        },
        None => seeds.into_par_iter().map(f).collect(),
    }
}

/// `n` independent draws of `sigma_k`, sorted, with timeouts counted.
pub fn replicate(params: &ModelParams, n: usize, base_seed: u64, opts: &SimOptions) -> Result<EmpiricalSample> {
    replicate_with(params, n, base_seed, opts, ReplicateOptions::default())
}

pub fn replicate_with(
    params: &ModelParams,
    n: usize,
    base_seed: u64,
    opts: &SimOptions,
    ropts: ReplicateOptions,
) -> Result<EmpiricalSample> {
    if n == 0 {
        return Err(Error::InvalidParams("replicate count must be at least 1".into()));
    }
    params.validate()?;
    let draws = map_replicates(n, base_seed, ropts.workers, |seed| {
        simulate_sigma(params, seed, opts).sigma.value()
    });
    let timeouts = draws.iter().filter(|d| d.is_none()).count();
    let values = draws.into_iter().flatten().collect();
    Ok(EmpiricalSample::new(values, timeouts, base_seed))
}
