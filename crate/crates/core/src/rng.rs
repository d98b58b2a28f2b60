//! Seeded random streams.
//!
//! Every run draws from one user seed. Each pipeline stage gets its own
//! ChaCha stream so that changing how much randomness one stage consumes
//! never shifts another stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Pipeline stages that consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split = 1,
    Permutations = 2,
    Init = 3,
    Dropout = 4,
    Sampling = 5,
    Coverage = 6,
    DevPermutations = 7,
    Synthetic = 8,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
