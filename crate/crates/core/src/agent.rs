//! The interface the experiment harness drives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mdp::TransitionSample;

/// An online agent in a continuing task: pick an action, then learn from
/// the transition it produced.
pub trait Agent {
    fn act(&mut self, state: usize) -> usize;

    fn observe(&mut self, sample: &TransitionSample) -> Result<()>;

    /// Exploration bonus the agent attached to the last observed transition,
    /// already scaled. Agents without a bonus report zero.
    fn last_bonus(&self) -> f64 {
        0.0
    }
}

/// Uniformly random actions.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    num_actions: usize,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(num_actions: usize, rng: ChaCha8Rng) -> Self {
        Self { num_actions, rng }
    }

    pub fn seeded(num_actions: usize, seed: u64) -> Self {
        Self::new(num_actions, ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _state: usize) -> usize {
        self.rng.gen_range(0..self.num_actions)
    }

    fn observe(&mut self, _sample: &TransitionSample) -> Result<()> {
        Ok(())
    }
}
