//! Per-entity pseudo-random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::time::SimDuration;

/// A reproducible random stream keyed by `(seed, stream_id)`.
///
/// Every simulated entity draws from its own stream, so adding an entity does
/// not shift another entity's draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(stream_id.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        RngStream {
            seed,
            stream_id: stream_id.to_owned(),
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }

    /// Uniform duration in `[0, max]`, drawn in whole microseconds.
    pub fn uniform_duration(&mut self, max: SimDuration) -> SimDuration {
        SimDuration::from_micros(self.rng.random_range(0..=max.as_micros()))
    }
}
