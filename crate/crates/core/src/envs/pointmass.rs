use serde::{Deserialize, Serialize};

use super::{clamp_action, Env, Outcome, StepResult};
use crate::error::{Error, Result};
use crate::SeededRng;

/// 1-D point mass pushed by a scaled force against linear drag; the state
/// is `(position, velocity)` and the reward is the negative distance to the
/// target after the step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassConfig {
    pub force_gain: f64,
    pub drag: f64,
    pub step_size: f64,
    pub target: f64,
    pub start: f64,
    pub max_steps: usize,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            force_gain: 1.0,
            drag: 0.5,
            step_size: 0.1,
            target: 1.0,
            start: 0.0,
            max_steps: 50,
        }
    }
}

impl PointMassConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.force_gain > 0.0) {
            return Err(Error::InvalidInput(format!("force gain {} must be positive", self.force_gain)));
        }
        if !(self.drag >= 0.0) {
            return Err(Error::InvalidInput(format!("drag {} must be non-negative", self.drag)));
        }
        if !(self.step_size > 0.0) || self.max_steps == 0 {
            return Err(Error::InvalidInput("step size and max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Semi-implicit Euler step: `v' = v + δ(g·a − μ·v)`, `x' = x + δ·v'`.
pub fn pointmass_step(config: &PointMassConfig, state: &[f64], action: f64) -> StepResult {
    let (a, clamped) = clamp_action(action);
    let (x, v) = (state[0], state[1]);
    let v2 = v + config.step_size * (config.force_gain * a - config.drag * v);
    let x2 = x + config.step_size * v2;
    StepResult {
        next_state: vec![x2, v2],
        reward: -(x2 - config.target).abs(),
        outcome: Outcome::Running,
        clamped,
    }
}

pub struct PointMassEnv {
    config: PointMassConfig,
    state: Vec<f64>,
    steps: usize,
    clamps: usize,
}

impl PointMassEnv {
    pub fn new(config: PointMassConfig) -> Result<Self> {
        config.validate()?;
        let state = vec![config.start, 0.0];
        Ok(Self {
            config,
            state,
            steps: 0,
            clamps: 0,
        })
    }
}

impl Env for PointMassEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn reset(&mut self, _rng: &mut SeededRng) -> Vec<f64> {
        self.state = vec![self.config.start, 0.0];
        self.steps = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: &[f64]) {
        self.state = state.to_vec();
        self.steps = 0;
    }

    fn step(&mut self, action: f64) -> StepResult {
        let mut r = pointmass_step(&self.config, &self.state, action);
        self.steps += 1;
        if r.clamped {
            self.clamps += 1;
        }
        if self.steps >= self.config.max_steps {
            r.outcome = Outcome::Timeout;
        }
        self.state = r.next_state.clone();
        r
    }

    fn clamp_count(&self) -> usize {
        self.clamps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(g: f64, mu: f64) -> PointMassConfig {
        PointMassConfig {
            force_gain: g,
            drag: mu,
            step_size: 0.1,
            ..PointMassConfig::default()
        }
    }

    #[test]
    fn euler_step() {
        let r = pointmass_step(&cfg(1.0, 0.0), &[0.0, 0.0], 1.0);
        assert!((r.next_state[1] - 0.1).abs() < 1e-15);
        assert!((r.next_state[0] - 0.01).abs() < 1e-15);
        assert!((r.reward + 0.99).abs() < 1e-15);
    }

    #[test]
    fn coasting_keeps_velocity() {
        let r = pointmass_step(&cfg(1.0, 0.0), &[0.3, 0.7], 0.0);
        assert_eq!(r.next_state[1], 0.7);
    }

    #[test]
    fn gain_scales_velocity_change() {
        let weak = pointmass_step(&cfg(0.05, 0.0), &[0.0, 0.2], 0.6).next_state[1] - 0.2;
        let strong = pointmass_step(&cfg(1.0, 0.0), &[0.0, 0.2], 0.6).next_state[1] - 0.2;
        assert!((weak / strong - 0.05).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(cfg(0.0, 0.0).validate().is_err());
        assert!(cfg(1.0, -0.1).validate().is_err());
        assert!(cfg(1.0, 0.0).validate().is_ok());
    }
}
