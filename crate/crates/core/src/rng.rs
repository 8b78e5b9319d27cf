//! Deterministic seed derivation for independent random streams.
//!
//! Training, dropout, and corpus synthesis each draw from their own stream
//! derived from `(root_seed, label, index)`, so resuming at step `n` replays
//! exactly the stream the uninterrupted run would have used at step `n`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates consecutive seed inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed, a stream label, and an index.
pub fn stream_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = mix(root);
    for b in label.as_bytes() {
        h = mix(h ^ u64::from(*b));
    }
    mix(h ^ index)
}

/// ChaCha8 generator for the derived stream.
pub fn stream_rng(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(root, label, index))
}
