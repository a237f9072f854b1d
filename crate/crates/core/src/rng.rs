//! Deterministic RNG streams. All randomness in the crate flows through
//! seeded ChaCha streams so that identical seeds reproduce identical runs
//! bit for bit, and so that training can be resumed exactly by restoring
//! stream positions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 0;
pub const STREAM_BATCH: u64 = 1;
pub const STREAM_AUG: u64 = 2;
pub const STREAM_POLICY: u64 = 3;
pub const STREAM_TD: u64 = 4;
pub const STREAM_EVAL: u64 = 5;
pub const STREAM_DATA: u64 = 6;
pub const STREAM_ORACLE: u64 = 7;

/// A ChaCha stream derived from `(seed, stream id)`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
