//! Desk-scale environments sharing a low-dimensional state space, with
//! per-instance dynamics, plus the scripted driving demonstrator.

mod bandit;
mod driving;
mod pointmass;
mod rollout;
mod scripted;
mod starts;

use serde::{Deserialize, Serialize};

pub use bandit::{BanditConfig, BanditEnv};
pub use driving::{
    driving_reset, driving_step, DrivingConfig, DrivingEnv, Gap, OBSTACLE_CENTERS, OBSTACLE_Y,
};
pub use pointmass::{pointmass_step, PointMassConfig, PointMassEnv};
pub use rollout::{rollout, rollout_from, Actor, Episode};
pub use scripted::{scripted_driving_corpus, scripted_driving_demo, source_of_tag, ScriptedDriver};
pub use starts::FixedStarts;

use crate::error::Result;
use crate::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Running,
    Goal,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Goal => "goal",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub outcome: Outcome,
    /// The requested action lay outside `[-1, 1]` and was clamped.
    pub clamped: bool,
}

/// A single-owner episodic environment with a scalar action in `[-1, 1]`.
pub trait Env: Send {
    fn state_dim(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64>;
    /// Starts an episode from a given state.
    fn reset_to(&mut self, state: &[f64]);
    fn step(&mut self, action: f64) -> StepResult;
    /// Number of out-of-range actions clamped since construction.
    fn clamp_count(&self) -> usize;
}

/// Serializable environment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Driving(DrivingConfig),
    PointMass(PointMassConfig),
    Bandit(BanditConfig),
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Driving(c) => c.validate(),
            EnvConfig::PointMass(c) => c.validate(),
            EnvConfig::Bandit(_) => Ok(()),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            EnvConfig::Driving(_) | EnvConfig::PointMass(_) => 2,
            EnvConfig::Bandit(_) => 1,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Env>> {
        self.validate()?;
        Ok(match self {
            EnvConfig::Driving(c) => Box::new(DrivingEnv::new(c.clone())?),
            EnvConfig::PointMass(c) => Box::new(PointMassEnv::new(c.clone())?),
            EnvConfig::Bandit(c) => Box::new(BanditEnv::new(c.clone())),
        })
    }
}

/// Clamps an action into `[-1, 1]`, reporting whether it was out of range.
/// Non-finite actions map to 0.
pub(crate) fn clamp_action(a: f64) -> (f64, bool) {
    if !a.is_finite() {
        return (0.0, true);
    }
    let c = a.clamp(-1.0, 1.0);
    (c, c != a)
}
