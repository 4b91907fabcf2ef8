//! Seeded random streams. Every draw is a function of `(seed, stream, position)`
//! so parallel workers and differently sized requests see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_STATES: u64 = 1;
pub(crate) const STREAM_WINDOWS: u64 = 2;
pub(crate) const STREAM_REACHABLE_WINDOWS: u64 = 3;
pub(crate) const STREAM_PERTURBATIONS: u64 = 4;
pub(crate) const STREAM_PAIRS: u64 = 6;
pub(crate) const STREAM_SYSTEM: u64 = 7;

/// Independent generator for `(purpose, index)` under `seed`.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 40) ^ index);
    rng
}
