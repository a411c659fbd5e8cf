//! Random asynchronous grids shared by the integration tests.

#![allow(dead_code)]

use hycov::sampling::SchemePair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Strictly increasing subset of size `k` of the lattice `{0, .., lattice}`.
fn lattice_subset(rng: &mut ChaCha8Rng, k: usize, lattice: usize) -> Vec<usize> {
    let mut picked = rand::seq::index::sample(rng, lattice + 1, k).into_vec();
    picked.sort_unstable();
    picked
}

/// A random pair of schemes whose observation periods overlap, on `[0, horizon]`, with at most `max_obs`
/// observations each. Times live on a coarse lattice so that ties between
/// the two processes are common.
pub fn random_pair(rng: &mut ChaCha8Rng, max_obs: usize, horizon: f64) -> SchemePair {
    loop {
        let pair = draw_pair(rng, max_obs, horizon);
        if hycov::sync::build_sync_grid(&pair).is_ok() {
            return pair;
        }
    }
}

fn draw_pair(rng: &mut ChaCha8Rng, max_obs: usize, horizon: f64) -> SchemePair {
    let n = rng.random_range(2..=max_obs);
    let m = rng.random_range(2..=max_obs);
    let lattice = rng.random_range(n.max(m)..=3 * n.max(m));
    let scale = horizon / lattice as f64;
    let to_times = |v: Vec<usize>| v.into_iter().map(|k| k as f64 * scale).collect::<Vec<_>>();
    let tx = to_times(lattice_subset(rng, n, lattice));
    let ty = to_times(lattice_subset(rng, m, lattice));
    SchemePair::new(tx, ty, horizon).expect("lattice times are valid")
}

/// Random walk values, one per observation.
pub fn random_values(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut v = 0.0;
    (0..len)
        .map(|_| {
            v += <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut *rng);
            v
        })
        .collect()
}

/// Sum of absolute overlapping increment products.
pub fn overlap_magnitude(pair: &SchemePair, x: &[f64], y: &[f64]) -> f64 {
    let (t, tau) = (&pair.times_x, &pair.times_y);
    let mut acc = 0.0;
    for i in 1..t.len() {
        for j in 1..tau.len() {
            if t[i].min(tau[j]) > t[i - 1].max(tau[j - 1]) {
                acc += ((x[i] - x[i - 1]) * (y[j] - y[j - 1])).abs();
            }
        }
    }
    acc
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
