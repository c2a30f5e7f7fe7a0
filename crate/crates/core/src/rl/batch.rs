use super::policy::{Policy, ValueFn};
use crate::envs::{Env, Outcome};
use crate::error::Result;
use crate::SeededRng;

/// On-policy experience across auto-reset episodes.
///
/// `done[t]` marks a terminal transition (goal, collision or timeout) whose
/// successor value is not bootstrapped. The final transition of a batch that
/// is not done is cut off mid-episode and bootstraps from `V(next_states[t])`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub states: Vec<Vec<f64>>,
    pub next_states: Vec<Vec<f64>>,
    pub pre_squash: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Rewards from the supplied reward function.
    pub rewards: Vec<f64>,
    /// The environment's own rewards, for reporting only.
    pub env_rewards: Vec<f64>,
    pub done: Vec<bool>,
    /// Outcomes of episodes that finished inside the batch.
    pub finished: Vec<(f64, Outcome)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Runs `policy` for exactly `n_steps` environment steps, resetting after
/// every terminal outcome. The environment is reset first.
pub fn collect_batch<R>(
    env: &mut dyn Env,
    policy: &Policy,
    reward_fn: R,
    n_steps: usize,
    rng: &mut SeededRng,
) -> Batch
where
    R: Fn(&[f64], &[f64]) -> f64,
{
    let mut b = Batch {
        states: Vec::with_capacity(n_steps),
        next_states: Vec::with_capacity(n_steps),
        pre_squash: Vec::with_capacity(n_steps),
        actions: Vec::with_capacity(n_steps),
        log_probs: Vec::with_capacity(n_steps),
        rewards: Vec::with_capacity(n_steps),
        env_rewards: Vec::with_capacity(n_steps),
        done: Vec::with_capacity(n_steps),
        finished: Vec::new(),
    };
    let mut state = env.reset(rng);
    let mut episode_return = 0.0;
    for _ in 0..n_steps {
        let s = policy.sample(&state, rng);
        let r = env.step(s.action);
        episode_return += r.reward;
        b.rewards.push(reward_fn(&state, &r.next_state));
        b.env_rewards.push(r.reward);
        b.pre_squash.push(s.pre_squash);
        b.actions.push(s.action);
        b.log_probs.push(s.log_prob);
        b.done.push(r.outcome.is_terminal());
        b.states.push(std::mem::replace(&mut state, r.next_state.clone()));
        b.next_states.push(r.next_state);
        if r.outcome.is_terminal() {
            b.finished.push((episode_return, r.outcome));
            episode_return = 0.0;
            state = env.reset(rng);
        }
    }
    b
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    /// GAE estimates before normalization.
    pub raw: Vec<f64>,
    /// Zero mean, unit variance over the batch.
    pub normalized: Vec<f64>,
    /// Regression targets for the value function: `raw + V(s)`.
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation over a batch.
pub fn gae_advantages(batch: &Batch, value_fn: &ValueFn, gamma: f64, lambda: f64) -> Result<Advantages> {
    let v = value_fn.values(&batch.states)?;
    let v_next = value_fn.values(&batch.next_states)?;
    Ok(gae_from_values(batch, &v, &v_next, gamma, lambda))
}

/// [`gae_advantages`] with precomputed `V(s)` and `V(s')`.
pub fn gae_from_values(batch: &Batch, v: &[f64], v_next: &[f64], gamma: f64, lambda: f64) -> Advantages {
    let n = batch.len();
    let mut raw = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let delta = if batch.done[t] {
            batch.rewards[t] - v[t]
        } else {
            batch.rewards[t] + gamma * v_next[t] - v[t]
        };
        // episodes only continue into t + 1 when t was not terminal
        let carry = if batch.done[t] || t + 1 == n { 0.0 } else { next_adv };
        raw[t] = delta + gamma * lambda * carry;
        next_adv = raw[t];
    }
    let returns = raw.iter().zip(v).map(|(a, v)| a + v).collect();
    Advantages {
        normalized: normalize(&raw),
        raw,
        returns,
    }
}

fn normalize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    x.iter().map(|v| (v - mean) / sd).collect()
}
