//! Deterministic RNG plumbing.
//!
//! Every stochastic stage (sampling, init, faults, noise) takes a seed derived
//! from the run seed plus a stream label, so repeats and parallel execution
//! see independent streams and results stay bit-identical across thread
//! counts.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// SplitMix64 step, used as cheap seed mixer.
pub fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from a base seed, a stream label and an index.
///
/// The label keeps unrelated consumers (fault injection vs read noise vs
/// minibatch shuffling) on disjoint streams even when they share a base seed.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut state = base;
    splitmix64(&mut state);
    let mut acc = mix(state);
    for byte in label.as_bytes() {
        acc = mix(acc ^ u64::from(*byte));
    }
    mix(acc ^ index)
}

/// Seeded ChaCha8 stream. ChaCha8 keeps save/load simple: the full generator
/// state is (seed, word position).
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
