use serde::{Deserialize, Serialize};

use super::{clamp_action, Env, Outcome, StepResult};
use crate::SeededRng;

/// One-step continuous bandit with reward `-(a - optimum)^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub optimum: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { optimum: 0.5 }
    }
}

pub struct BanditEnv {
    config: BanditConfig,
    clamps: usize,
}

impl BanditEnv {
    pub fn new(config: BanditConfig) -> Self {
        Self { config, clamps: 0 }
    }
}

impl Env for BanditEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn max_steps(&self) -> usize {
        1
    }

    fn reset(&mut self, _rng: &mut SeededRng) -> Vec<f64> {
        vec![0.0]
    }

    fn reset_to(&mut self, _state: &[f64]) {}

    fn step(&mut self, action: f64) -> StepResult {
        let (a, clamped) = clamp_action(action);
        self.clamps += clamped as usize;
        StepResult {
            next_state: vec![0.0],
            reward: -(a - self.config.optimum).powi(2),
            outcome: Outcome::Timeout,
            clamped,
        }
    }

    fn clamp_count(&self) -> usize {
        self.clamps
    }
}
