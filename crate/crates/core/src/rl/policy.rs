use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::Actor;
use crate::error::Result;
use crate::numcore::{Activation, Checkpoint, Mlp, Parameters, Tensor};
use crate::SeededRng;

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Gaussian policy over a pre-squash action `u`; the environment receives
/// `tanh(u)`. The standard deviation is state independent.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    /// Shape `[1]`; kept inside `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Tensor,
}

/// State-value baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFn {
    pub net: Mlp,
}

/// Sampled action with what the learner needs to score it later.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionSample {
    pub pre_squash: f64,
    pub action: f64,
    pub log_prob: f64,
}

fn net(state_dim: usize, hidden: usize, rng: &mut SeededRng) -> Mlp {
    let mut net = Mlp::new(
        &[state_dim, hidden, hidden, 1],
        Activation::Tanh,
        Activation::Identity,
        rng,
    );
    // small last layer: near-zero initial outputs
    net.layers.last_mut().unwrap().weight.data_mut().iter_mut().for_each(|w| *w *= 0.01);
    net
}

/// Log density of `u` under `N(mean, exp(log_std)²)`.
pub fn gaussian_log_prob(u: f64, mean: f64, log_std: f64) -> f64 {
    let z = (u - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

impl Policy {
    pub fn new(state_dim: usize, hidden: usize, init_log_std: f64, rng: &mut SeededRng) -> Self {
        Self {
            net: net(state_dim, hidden, rng),
            log_std: Tensor::vector(vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)]),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn log_std(&self) -> f64 {
        self.log_std.data()[0].clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    pub fn mean(&self, state: &[f64]) -> f64 {
        self.net.forward_one(state)[0]
    }

    pub fn sample(&self, state: &[f64], rng: &mut SeededRng) -> ActionSample {
        let mean = self.mean(state);
        let log_std = self.log_std();
        let eps: f64 = rng.sample(StandardNormal);
        let u = mean + log_std.exp() * eps;
        ActionSample {
            pre_squash: u,
            action: u.tanh(),
            log_prob: gaussian_log_prob(u, mean, log_std),
        }
    }

    /// Noise-free action `tanh(mean)`.
    pub fn greedy(&self, state: &[f64]) -> f64 {
        self.mean(state).tanh()
    }

    /// Differential entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std() + 0.5 + HALF_LN_2PI
    }

    /// Restores the log-std invariant after an optimizer step.
    pub fn clamp_log_std(&mut self) {
        let v = &mut self.log_std.data_mut()[0];
        *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) -> Result<()> {
        ck.insert_params(prefix, self);
        ck.set_meta(&format!("{prefix}.state_dim"), &self.state_dim())?;
        ck.set_meta(&format!("{prefix}.hidden"), &self.net.layers[0].outputs())
    }

    pub fn read_checkpoint(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let state_dim: usize = ck.meta(&format!("{prefix}.state_dim"))?;
        let hidden: usize = ck.meta(&format!("{prefix}.hidden"))?;
        let mut rng = <SeededRng as rand::SeedableRng>::seed_from_u64(0);
        let mut p = Policy::new(state_dim, hidden, 0.0, &mut rng);
        ck.load_params(prefix, &mut p)?;
        Ok(p)
    }
}

impl Parameters for Policy {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = self
            .net
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("net.{n}"), t))
            .collect();
        v.push(("log_std".into(), &self.log_std));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.net.tensors_mut();
        v.push(&mut self.log_std);
        v
    }
}

/// Samples stochastic actions.
impl Actor for Policy {
    fn act(&self, state: &[f64], rng: &mut SeededRng) -> f64 {
        self.sample(state, rng).action
    }
}

/// Wraps a policy to act with its mean.
pub struct Greedy<'a>(pub &'a Policy);

impl Actor for Greedy<'_> {
    fn act(&self, state: &[f64], _rng: &mut SeededRng) -> f64 {
        self.0.greedy(state)
    }
}

impl ValueFn {
    pub fn new(state_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        Self {
            net: net(state_dim, hidden, rng),
        }
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.net.forward_one(state)[0]
    }

    /// Values of many states in one batched pass.
    pub fn values(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.net.forward(&Tensor::from_rows(states)?)?.into_data())
    }
}

impl Parameters for ValueFn {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.net.named_tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.tensors_mut()
    }
}
