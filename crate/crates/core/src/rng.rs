//! Per-path random streams.
//!
//! Every path `i` of an ensemble draws from its own ChaCha stream keyed by
//! `(master seed, i)`. The keystream is a pure function of that pair and of
//! the word counter, so a path is reproduced exactly regardless of which
//! worker thread generates it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type PathRng = ChaCha12Rng;

pub fn path_rng(seed: u64, path: u64) -> PathRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Derives an independent master seed for a labelled sub-experiment.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finaliser over the combined words
    let mut z = seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
