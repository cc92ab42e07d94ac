//! Seed derivation for reproducible per-image random streams.
//!
//! Randomized passes (error injection, synthetic predictions) draw from one
//! logical generator per image, derived from the run seed and the image id.
//! The derivation below is part of the external contract: results are
//! identical no matter in which order, or on how many workers, images are
//! processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; spreads low-entropy inputs over the full 64 bits.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-stream seed for one image: `splitmix64(seed ^ splitmix64(image_id))`.
pub fn per_image_seed(seed: u64, image_id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(image_id))
}

/// Deterministic generator for one image's random draws.
pub fn per_image_rng(seed: u64, image_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(per_image_seed(seed, image_id))
}
