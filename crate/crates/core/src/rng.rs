//! Seeded random streams.
//!
//! A run seed fans out into independent ChaCha streams, one per consumer, so
//! that adding draws in one place never shifts another consumer's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ArrayInit = 1,
    ReadNoise = 2,
    Shuffle = 3,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
