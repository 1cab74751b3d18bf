//! Deterministic seed derivation.
//!
//! A single master seed is expanded into per-component seeds with a
//! splitmix64 chain, and every stochastic component draws from a ChaCha8
//! stream seeded with the derived value. Both primitives are published,
//! fixed algorithms, so any other implementation can reproduce the exact
//! byte streams:
//!
//! - `splitmix64(x)` is the standard finalizer: add the golden-ratio
//!   increment, then xor-shift-multiply twice.
//! - `derive_seed(master, words)` folds each word into the state as
//!   `state = splitmix64(state ^ word)` and finalizes once more.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// One splitmix64 step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands a master seed into a component seed identified by `words`
/// (component tag, grid indices, player index, ...).
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let mut state = master;
    for &w in words {
        state = splitmix64(state ^ w);
    }
    splitmix64(state)
}

/// Seeded ChaCha8 stream for a derived seed.
pub fn rng_from(master: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, words))
}
