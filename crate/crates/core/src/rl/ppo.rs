use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::batch::{gae_advantages, Batch};
use super::policy::{Policy, ValueFn, LOG_STD_MAX, LOG_STD_MIN};
use super::RlHyper;
use crate::error::{Error, Result};
use crate::numcore::{Adam, AdamConfig, Parameters, Tensor};
use crate::SeededRng;

/// Averages over the last policy update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Sample estimate of `KL(old ‖ new)`.
    pub approx_kl: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Minibatch slice handed to the surrogate.
pub struct SurrogateInput<'a> {
    pub states: &'a Tensor,
    pub pre_squash: &'a [f64],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
}

pub struct SurrogateOutput {
    pub loss: f64,
    pub grads: Policy,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Clipped surrogate loss `-mean(min(ρA, clip(ρ, 1±ε)A)) - c·H` and its
/// gradient, with `ρ` the probability ratio of the stored pre-squash actions.
pub fn surrogate_loss(policy: &Policy, input: &SurrogateInput, clip: f64, entropy_coef: f64) -> Result<SurrogateOutput> {
    let n = input.states.rows();
    if n == 0 || input.pre_squash.len() != n || input.old_log_probs.len() != n || input.advantages.len() != n {
        return Err(Error::Shape("surrogate inputs must share one length".into()));
    }
    let cache = policy.net.forward_cached(input.states)?;
    let means = cache.output().data();
    let raw_ls = policy.log_std.data()[0];
    let ls = policy.log_std();
    let sigma = ls.exp();
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut d_mean = vec![0.0; n];
    let mut d_ls = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    for i in 0..n {
        let z = (input.pre_squash[i] - means[i]) / sigma;
        let log_prob = super::policy::gaussian_log_prob(input.pre_squash[i], means[i], ls);
        let ratio = (log_prob - input.old_log_probs[i]).exp();
        let a = input.advantages[i];
        let unclipped = ratio * a;
        let bounded = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        kl += input.old_log_probs[i] - log_prob;
        if unclipped <= bounded {
            loss -= unclipped * inv_n;
            let coef = -a * ratio * inv_n;
            d_mean[i] = coef * z / sigma;
            d_ls += coef * (z * z - 1.0);
        } else {
            loss -= bounded * inv_n;
            clipped += 1;
        }
    }
    loss -= entropy_coef * policy.entropy();
    d_ls -= entropy_coef;
    if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls) {
        d_ls = 0.0;
    }

    let (net_grads, _) = policy.net.backward(&cache, &Tensor::matrix(n, 1, d_mean)?)?;
    Ok(SurrogateOutput {
        loss,
        grads: Policy {
            net: net_grads,
            log_std: Tensor::vector(vec![d_ls]),
        },
        approx_kl: kl * inv_n,
        clip_fraction: clipped as f64 * inv_n,
    })
}

/// `0.5 · mean((V(s) − target)²)` and its gradient.
pub fn value_loss(value: &ValueFn, states: &Tensor, targets: &[f64]) -> Result<(f64, ValueFn)> {
    let n = states.rows();
    let cache = value.net.forward_cached(states)?;
    let v = cache.output().data();
    let mut loss = 0.0;
    let mut d = vec![0.0; n];
    for i in 0..n {
        let e = v[i] - targets[i];
        loss += 0.5 * e * e / n as f64;
        d[i] = e / n as f64;
    }
    let (g, _) = value.net.backward(&cache, &Tensor::matrix(n, 1, d)?)?;
    Ok((loss, ValueFn { net: g }))
}

/// Policy and value function with their optimizer state.
#[derive(Clone, Debug)]
pub struct PpoLearner {
    pub policy: Policy,
    pub value: ValueFn,
    pub hyper: RlHyper,
    policy_opt: Adam,
    value_opt: Adam,
}

impl PpoLearner {
    pub fn new(state_dim: usize, hyper: RlHyper, rng: &mut SeededRng) -> Self {
        let policy = Policy::new(state_dim, hyper.hidden, hyper.init_log_std, rng);
        let value = ValueFn::new(state_dim, hyper.hidden, rng);
        Self {
            policy_opt: Adam::new(&policy, AdamConfig::with_lr(hyper.policy_lr)),
            value_opt: Adam::new(&value, AdamConfig::with_lr(hyper.value_lr)),
            policy,
            value,
            hyper,
        }
    }

    /// Clipped-surrogate epochs plus value regression on one batch. On a
    /// non-finite loss or gradient the learner is left exactly as it was.
    pub fn update(&mut self, batch: &Batch, rng: &mut SeededRng) -> Result<UpdateStats> {
        let h = &self.hyper;
        let adv = gae_advantages(batch, &self.value, h.gamma, h.gae_lambda)?;
        let n = batch.len();
        let mut policy = self.policy.clone();
        let mut value = self.value.clone();
        let mut policy_opt = self.policy_opt.clone();
        let mut value_opt = self.value_opt.clone();

        let mut stats = UpdateStats::default();
        let mut count = 0.0;
        let mut order: Vec<usize> = (0..n).collect();
        let mb = h.minibatch.clamp(1, n.max(1));
        for epoch in 0..h.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(mb) {
                let states = Tensor::from_rows(&chunk.iter().map(|&i| batch.states[i].clone()).collect::<Vec<_>>())?;
                let pre: Vec<f64> = chunk.iter().map(|&i| batch.pre_squash[i]).collect();
                let old: Vec<f64> = chunk.iter().map(|&i| batch.log_probs[i]).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv.normalized[i]).collect();
                let targets: Vec<f64> = chunk.iter().map(|&i| adv.returns[i]).collect();
                let input = SurrogateInput {
                    states: &states,
                    pre_squash: &pre,
                    old_log_probs: &old,
                    advantages: &a,
                };
                let mut s = surrogate_loss(&policy, &input, h.clip_ratio, h.entropy_coef)?;
                let (vl, mut vg) = value_loss(&value, &states, &targets)?;
                if !s.loss.is_finite() || !vl.is_finite() {
                    return Err(Error::NonFinite(format!("policy update loss in epoch {epoch}")));
                }
                s.grads.clip_global_norm(h.max_grad_norm);
                vg.clip_global_norm(h.max_grad_norm);
                policy_opt.step(&mut policy, &s.grads)?;
                policy.clamp_log_std();
                value_opt.step(&mut value, &vg)?;
                stats.policy_loss += s.loss;
                stats.value_loss += vl;
                stats.approx_kl += s.approx_kl;
                stats.clip_fraction += s.clip_fraction;
                count += 1.0;
            }
        }
        if !policy.all_finite() || !value.all_finite() {
            return Err(Error::NonFinite("parameters after policy update".into()));
        }
        self.policy = policy;
        self.value = value;
        self.policy_opt = policy_opt;
        self.value_opt = value_opt;
        if count > 0.0 {
            stats.policy_loss /= count;
            stats.value_loss /= count;
            stats.approx_kl /= count;
            stats.clip_fraction /= count;
        }
        stats.entropy = self.policy.entropy();
        Ok(stats)
    }
}
