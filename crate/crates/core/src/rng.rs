//! Seedable, portable randomness.
//!
//! Every stochastic operation in this crate draws from a ChaCha8 stream, so a
//! `(seed, stream)` pair fully determines the bytes produced on any platform.
//! Stream 0 is reserved for validation data during training; batch sampling
//! uses streams >= 1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Prng = ChaCha8Rng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator family keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> Prng {
    let mut rng = Prng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
