//! Deterministic random-number streams.
//!
//! Every stochastic step in the pipeline draws from an isolated ChaCha8
//! stream keyed by `(seed, purpose, index)`. Streams never share state, so
//! results are independent of execution order and thread count, and adding
//! new consumers (e.g. knockoff columns) does not perturb existing ones.
//!
//! The key schedule is splitmix64: the three inputs are folded into a
//! 64-bit state which is then expanded into the 32-byte ChaCha key.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Per-feature streams used when fitting original columns.
pub const PURPOSE_MM: u64 = 1;
/// Bootstrap resampling of one column into its knockoff.
pub const PURPOSE_KNOCKOFF_GEN: u64 = 2;
/// Per-column streams used when fitting knockoff columns.
pub const PURPOSE_KNOCKOFF_MM: u64 = 3;
/// Per-feature streams of the synthetic data generator.
pub const PURPOSE_SIM: u64 = 4;
/// Per-restart streams for k-means seeding.
pub const PURPOSE_KMEANS: u64 = 5;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the isolated stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed;
    let a = splitmix64(&mut state);
    state ^= purpose;
    let b = splitmix64(&mut state);
    state ^= index;
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);

    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..32].copy_from_slice(&d.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
