//! Seeded, counter-based random streams.
//!
//! Every batch of work draws from its own ChaCha stream keyed by
//! `(seed, stream)`, so results do not depend on how batches are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
