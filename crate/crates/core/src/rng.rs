//! Seeded random streams.
//!
//! Every source of randomness in a run is one of a fixed set of named
//! streams derived from the run seed. Identical seeds reproduce identical
//! sequences, and the streams are mutually independent, so e.g. the noise
//! draws of a NoisyNet agent cannot desynchronize the environment or the
//! replay sampling of an otherwise identical run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// The named streams a run may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    /// Environment dynamics (spawn positions).
    Env,
    /// Network weight initialization.
    AgentInit,
    /// Exploration: epsilon-greedy coin flips and noisy-net noise samples.
    Exploration,
    /// Replay buffer batch sampling.
    Replay,
    /// Attack filter Bernoulli decisions.
    Attack,
}

impl StreamId {
    fn index(self) -> u64 {
        match self {
            StreamId::Env => 0,
            StreamId::AgentInit => 1,
            StreamId::Exploration => 2,
            StreamId::Replay => 3,
            StreamId::Attack => 4,
        }
    }
}

/// A single-owner deterministic random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.index());
        Self { rng }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}
