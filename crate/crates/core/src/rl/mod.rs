//! On-policy learner shared by the per-cluster adversarial loops and the
//! final imitation loop: tanh-squashed Gaussian policy, value baseline,
//! generalized advantage estimation and clipped-surrogate updates.

mod batch;
mod policy;
mod ppo;

use serde::{Deserialize, Serialize};

pub use batch::{collect_batch, gae_advantages, gae_from_values, Advantages, Batch};
pub use policy::{gaussian_log_prob, ActionSample, Greedy, Policy, ValueFn, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{surrogate_loss, value_loss, PpoLearner, SurrogateInput, SurrogateOutput, UpdateStats};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlHyper {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub steps_per_batch: usize,
    pub minibatch: usize,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub init_log_std: f64,
}

impl Default for RlHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epochs: 4,
            steps_per_batch: 2048,
            minibatch: 256,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            hidden: 64,
            init_log_std: -0.5,
        }
    }
}

impl RlHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidInput(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.clip_ratio > 0.0) {
            return Err(Error::InvalidInput("clip ratio must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidInput("GAE lambda outside [0, 1]".into()));
        }
        if self.steps_per_batch == 0 || self.minibatch == 0 || self.epochs == 0 || self.hidden == 0 {
            return Err(Error::InvalidInput("batch sizes, epochs and width must be positive".into()));
        }
        if !(self.policy_lr > 0.0 && self.value_lr > 0.0) {
            return Err(Error::InvalidInput("learning rates must be positive".into()));
        }
        Ok(())
    }
}
