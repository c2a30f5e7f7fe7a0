use rand::Rng;

use super::{Env, StepResult};
use crate::error::{Error, Result};
use crate::SeededRng;

/// Wraps an environment so that every reset starts from one of a fixed set
/// of states, drawn uniformly.
pub struct FixedStarts {
    inner: Box<dyn Env>,
    starts: Vec<Vec<f64>>,
}

impl FixedStarts {
    pub fn new(inner: Box<dyn Env>, starts: Vec<Vec<f64>>) -> Result<Self> {
        if starts.is_empty() {
            return Err(Error::InvalidInput("no start states".into()));
        }
        if let Some(s) = starts.iter().find(|s| s.len() != inner.state_dim()) {
            return Err(Error::Shape(format!("start state of width {} for a {}-dim environment", s.len(), inner.state_dim())));
        }
        Ok(Self { inner, starts })
    }
}

impl Env for FixedStarts {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn max_steps(&self) -> usize {
        self.inner.max_steps()
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        let s = self.starts[rng.random_range(0..self.starts.len())].clone();
        self.inner.reset_to(&s);
        s
    }

    fn reset_to(&mut self, state: &[f64]) {
        self.inner.reset_to(state);
    }

    fn step(&mut self, action: f64) -> StepResult {
        self.inner.step(action)
    }

    fn clamp_count(&self) -> usize {
        self.inner.clamp_count()
    }
}
