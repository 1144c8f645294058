//! Keyed random streams.
//!
//! Every random draw in the simulator comes from a generator seeded by a
//! tuple such as `(seed, node, round)`, so sampling order never depends on
//! evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of keys into one 64-bit seed.
pub fn derive_seed(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x5EED_0F_DEC0_0017_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(keys: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(keys))
}

/// Stream used by node `node` at round `round` of a run seeded with `seed`.
pub fn node_round_stream(seed: u64, node: usize, round: usize) -> StreamRng {
    stream(&[seed, node as u64, round as u64])
}
