//! Seeded, splittable random streams.
//!
//! Every random quantity in an experiment is drawn from a ChaCha stream
//! addressed by `(seed, stream index)`, so results are bit-reproducible and
//! independent of the order in which trials are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

/// The random stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of tags into a new seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}
