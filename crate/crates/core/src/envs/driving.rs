use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_action, Env, Outcome, StepResult};
use crate::error::{Error, Result};
use crate::SeededRng;

/// Horizontal centers of the two obstacles, as fractions of the road width.
pub const OBSTACLE_CENTERS: [f64; 2] = [0.25, 0.75];
/// Vertical extent shared by both obstacles.
pub const OBSTACLE_Y: (f64, f64) = (0.45, 0.55);

const STEP_REWARD: f64 = -1.0;
const GOAL_BONUS: f64 = 1000.0;
const COLLISION_PENALTY: f64 = -1000.0;
// positions are accumulated sums of δ·speed, so allow for rounding at the finish line
const GOAL_EPS: f64 = 1e-9;

/// Unit-square road: start on the bottom edge, finish at `y >= 1`, avoid two
/// rectangular obstacles. Forward progress is fixed at `step_size * speed`
/// per step; the action steers laterally by up to the same amount.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingConfig {
    pub obstacle_widths: [f64; 2],
    pub speed: f64,
    pub step_size: f64,
    pub max_steps: usize,
}

impl Default for DrivingConfig {
    fn default() -> Self {
        Self::target()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gap {
    Left,
    Middle,
    Right,
}

impl Gap {
    pub const ALL: [Gap; 3] = [Gap::Left, Gap::Middle, Gap::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Gap::Left => "left",
            Gap::Middle => "middle",
            Gap::Right => "right",
        }
    }
}

impl DrivingConfig {
    pub fn new(obstacle_widths: [f64; 2], speed: f64) -> Self {
        Self {
            obstacle_widths,
            speed,
            step_size: 0.02,
            max_steps: 200,
        }
    }

    /// The imitator's dynamics.
    pub fn target() -> Self {
        Self::new([0.4, 0.25], 1.0)
    }

    /// The three demonstrator dynamics, tagged.
    pub fn standard_sources() -> Vec<(String, Self)> {
        vec![
            ("w0.1-0.5_v1".to_string(), Self::new([0.1, 0.5], 1.0)),
            ("w0.5-0.25_v1".to_string(), Self::new([0.5, 0.25], 1.0)),
            ("w0.25-0.25_v5".to_string(), Self::new([0.25, 0.25], 5.0)),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.obstacle_widths {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::InvalidInput(format!("obstacle width {w} outside (0, 1)")));
            }
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidInput(format!("speed {} must be positive", self.speed)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidInput(format!("step size {} must be positive", self.step_size)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Distance covered per step.
    pub fn stride(&self) -> f64 {
        self.step_size * self.speed
    }

    /// Obstacle x-extents `[lo, hi]`.
    pub fn obstacles(&self) -> [(f64, f64); 2] {
        let mut out = [(0.0, 0.0); 2];
        for (i, (&c, &w)) in OBSTACLE_CENTERS.iter().zip(&self.obstacle_widths).enumerate() {
            out[i] = (c - w / 2.0, c + w / 2.0);
        }
        out
    }

    /// Horizontal extent of a gap; may be empty or inverted when obstacles
    /// touch the border or each other.
    pub fn gap_extent(&self, gap: Gap) -> (f64, f64) {
        let [(l0, h0), (l1, h1)] = self.obstacles();
        match gap {
            Gap::Left => (0.0, l0),
            Gap::Middle => (h0, l1),
            Gap::Right => (h1, 1.0),
        }
    }

    pub fn gap_is_feasible(&self, gap: Gap) -> bool {
        let (lo, hi) = self.gap_extent(gap);
        hi - lo > 0.0
    }

    pub fn feasible_gaps(&self) -> Vec<Gap> {
        Gap::ALL.into_iter().filter(|g| self.gap_is_feasible(*g)).collect()
    }

    pub fn collides(&self, x: f64, y: f64) -> bool {
        if y < OBSTACLE_Y.0 || y > OBSTACLE_Y.1 {
            return false;
        }
        self.obstacles().iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }
}

/// Start state `(x, 0)` with `x ~ U[0, 1]`.
pub fn driving_reset(_config: &DrivingConfig, rng: &mut SeededRng) -> Vec<f64> {
    vec![rng.random::<f64>(), 0.0]
}

/// One kinematic step. Timeouts are tracked by [`DrivingEnv`], which owns the step counter.
pub fn driving_step(config: &DrivingConfig, state: &[f64], action: f64) -> StepResult {
    let (a, clamped) = clamp_action(action);
    let stride = config.stride();
    let x = (state[0] + a * stride).clamp(0.0, 1.0);
    let y = state[1] + stride;
    let (reward, outcome) = if y >= 1.0 - GOAL_EPS {
        (STEP_REWARD + GOAL_BONUS, Outcome::Goal)
    } else if config.collides(x, y) {
        (STEP_REWARD + COLLISION_PENALTY, Outcome::Collision)
    } else {
        (STEP_REWARD, Outcome::Running)
    };
    StepResult {
        next_state: vec![x, y],
        reward,
        outcome,
        clamped,
    }
}

pub struct DrivingEnv {
    config: DrivingConfig,
    state: Vec<f64>,
    steps: usize,
    clamps: usize,
}

impl DrivingEnv {
    pub fn new(config: DrivingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: vec![0.5, 0.0],
            steps: 0,
            clamps: 0,
        })
    }

    pub fn config(&self) -> &DrivingConfig {
        &self.config
    }
}

impl Env for DrivingEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        self.state = driving_reset(&self.config, rng);
        self.steps = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: &[f64]) {
        self.state = state.to_vec();
        self.steps = 0;
    }

    fn step(&mut self, action: f64) -> StepResult {
        let mut r = driving_step(&self.config, &self.state, action);
        self.steps += 1;
        if r.clamped {
            self.clamps += 1;
        }
        if r.outcome == Outcome::Running && self.steps >= self.config.max_steps {
            r.outcome = Outcome::Timeout;
        }
        self.state = r.next_state.clone();
        r
    }

    fn clamp_count(&self) -> usize {
        self.clamps
    }
}
