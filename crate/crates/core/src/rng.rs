//! Deterministic RNG stream derivation.
//!
//! Every random draw in the crate comes from a ChaCha12 stream whose seed is
//! a pure function of (master seed, purpose tag, index path). Purposes are
//! fixed-name domains, so adding a new consumer (say, a diagnostic probe)
//! never shifts the draws of an existing one, and replications can run in
//! parallel with independent streams.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Fixed stream domains. The discriminant is part of the derivation and must
/// stay stable; append new purposes at the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Simulate = 1,
    SettingDraw = 2,
    EmInit = 3,
    CvFolds = 4,
    Probe = 5,
    Instance = 6,
}

/// SplitMix64 step: the standard 64-bit finalizer-based generator.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed by absorbing each path component through SplitMix64.
pub fn derive_seed(master: u64, purpose: Purpose, path: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    state ^= purpose as u64;
    out ^= splitmix64(&mut state);
    for &p in path {
        state ^= p;
        out ^= splitmix64(&mut state);
    }
    out
}

/// A ChaCha12 generator on the derived stream.
pub fn stream_rng(master: u64, purpose: Purpose, path: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, purpose, path))
}
