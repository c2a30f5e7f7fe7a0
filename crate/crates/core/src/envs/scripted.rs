use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::driving::{driving_reset, driving_step, DrivingConfig, Gap, OBSTACLE_Y};
use super::Outcome;
use crate::demos::{Corpus, Trajectory};
use crate::error::{Error, Result};
use crate::SeededRng;

/// Hand-written driving rule: steer toward the chosen gap's center until
/// past the obstacles, then toward the middle of the road.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedDriver {
    /// Fraction of the lateral error closed per step before the obstacles.
    pub approach_gain: f64,
    /// Fraction of the lateral error closed per step after the obstacles.
    pub return_gain: f64,
    /// Standard deviation of the Gaussian action noise.
    pub noise: f64,
    /// Starts are drawn from the uniform start distribution conditioned on
    /// lying within this distance of the gap center.
    pub reach: f64,
    pub max_attempts: usize,
}

impl Default for ScriptedDriver {
    fn default() -> Self {
        Self {
            approach_gain: 0.5,
            return_gain: 0.15,
            noise: 0.05,
            reach: 0.3,
            max_attempts: 100,
        }
    }
}

impl ScriptedDriver {
    /// Noise-free steering command for `state`.
    pub fn command(&self, config: &DrivingConfig, gap: Gap, state: &[f64]) -> f64 {
        let (lo, hi) = config.gap_extent(gap);
        let (aim, gain) = if state[1] > OBSTACLE_Y.1 {
            (0.5, self.return_gain)
        } else {
            ((lo + hi) / 2.0, self.approach_gain)
        };
        (gain * (aim - state[0]) / config.stride()).clamp(-1.0, 1.0)
    }

    /// Generates one goal-reaching state trajectory through `gap`.
    pub fn demo(&self, config: &DrivingConfig, gap: Gap, rng: &mut SeededRng) -> Result<Vec<Vec<f64>>> {
        config.validate()?;
        if !config.gap_is_feasible(gap) {
            return Err(Error::Infeasible(format!(
                "{} gap has no clearance with obstacle widths {:?}",
                gap.as_str(),
                config.obstacle_widths
            )));
        }
        let (lo, hi) = config.gap_extent(gap);
        let center = (lo + hi) / 2.0;
        for _ in 0..self.max_attempts {
            let mut state = driving_reset(config, rng);
            while (state[0] - center).abs() > self.reach {
                state = driving_reset(config, rng);
            }
            let mut states = vec![state.clone()];
            let mut outcome = Outcome::Running;
            for _ in 0..config.max_steps {
                let noise: f64 = rng.sample(StandardNormal);
                let a = (self.command(config, gap, &state) + self.noise * noise).clamp(-1.0, 1.0);
                let r = driving_step(config, &state, a);
                state = r.next_state;
                states.push(state.clone());
                outcome = r.outcome;
                if outcome.is_terminal() {
                    break;
                }
            }
            if outcome == Outcome::Goal {
                return Ok(states);
            }
        }
        Err(Error::Infeasible(format!(
            "scripted driver failed to clear the {} gap in {} attempts",
            gap.as_str(),
            self.max_attempts
        )))
    }
}

/// State-only demonstration through `gap` using the default driver.
pub fn scripted_driving_demo(
    config: &DrivingConfig,
    gap: Gap,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<f64>>> {
    ScriptedDriver::default().demo(config, gap, rng)
}

/// [`ScriptedDriver::corpus`] with the default driver.
pub fn scripted_driving_corpus(
    source: &str,
    config: &DrivingConfig,
    count: usize,
    first_id: u64,
    rng: &mut SeededRng,
) -> Result<Corpus> {
    ScriptedDriver::default().corpus(source, config, count, first_id, rng)
}

impl ScriptedDriver {
    /// `count` demonstrations under one source dynamics, split round-robin
    /// over its feasible gaps. Ids run from `first_id`; tags read
    /// `"{source}/{gap}"`.
    pub fn corpus(
        &self,
        source: &str,
        config: &DrivingConfig,
        count: usize,
        first_id: u64,
        rng: &mut SeededRng,
    ) -> Result<Corpus> {
        if count == 0 {
            return Err(Error::InvalidInput(format!("zero demonstrations requested for {source}")));
        }
        let gaps = config.feasible_gaps();
        if gaps.is_empty() {
            return Err(Error::Infeasible(format!("source {source} has no feasible gap")));
        }
        let mut trajectories = Vec::with_capacity(count);
        for i in 0..count {
            let gap = gaps[i % gaps.len()];
            let states = self
                .demo(config, gap, rng)
                .map_err(|e| Error::Infeasible(format!("source {source}: {e}")))?;
            trajectories.push(Trajectory {
                id: first_id + i as u64,
                source_tag: format!("{source}/{}", gap.as_str()),
                states,
            });
        }
        Corpus::new(trajectories)
    }
}

/// Source part of a `"{source}/{gap}"` tag.
pub fn source_of_tag(tag: &str) -> &str {
    tag.split('/').next().unwrap_or(tag)
}
