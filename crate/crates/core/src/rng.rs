//! Reproducible random streams: one ChaCha8 stream per run, keyed by
//! `(base_seed, run_index)`, so an ensemble is independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream `run` of the generator family seeded by `base_seed`.
pub fn stream(base_seed: u64, run: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(run);
    rng
}
