//! Named, seeded random sub-streams.
//!
//! Every random decision in the pipeline draws from a ChaCha stream keyed by
//! the run seed, a stream label and a list of indices, so any component can be
//! replayed in isolation and parallel schedules reproduce the sequential one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const SANITIZE: &str = "sanitize";
pub const KMEANS_INIT: &str = "kmeans-init";
pub const CHAIN_DRAWS: &str = "chain-draws";
pub const WEIGHT_INIT: &str = "weight-init";
pub const SHUFFLE: &str = "shuffle";
pub const DROPOUT: &str = "dropout";
pub const SYNTH: &str = "synth";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed, a label and indices into one 64-bit key.
pub fn stream_key(seed: u64, label: &str, indices: &[u64]) -> u64 {
    let mut key = splitmix64(seed);
    for b in label.bytes() {
        key = splitmix64(key ^ u64::from(b));
    }
    // separator so ("ab", [1]) and ("a", [b, 1]) cannot collide
    key = splitmix64(key ^ 0xFF);
    for &i in indices {
        key = splitmix64(key ^ i);
    }
    key
}

pub fn substream(seed: u64, label: &str, indices: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, label, indices))
}
