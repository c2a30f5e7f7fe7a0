use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::discriminator::{discriminator_loss_grad, Discriminator, InputScale};
use super::sampler::DemoPool;
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::numcore::{Adam, AdamConfig, Tensor};
use crate::rl::{collect_batch, Batch, PpoLearner, RlHyper, UpdateStats};
use crate::SeededRng;

/// Adversarial loop settings shared by the per-cluster and final trainings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GailHyper {
    pub iterations: usize,
    pub disc_hidden: usize,
    pub disc_lr: f64,
    pub disc_minibatch: usize,
    pub disc_epochs: usize,
}

impl Default for GailHyper {
    fn default() -> Self {
        Self {
            iterations: 150,
            disc_hidden: 64,
            disc_lr: 3e-4,
            disc_minibatch: 256,
            disc_epochs: 1,
        }
    }
}

impl GailHyper {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.disc_hidden == 0 || self.disc_minibatch == 0 || self.disc_epochs == 0 {
            return Err(Error::InvalidInput("GAIL iterations, width, minibatch and epochs must be positive".into()));
        }
        if !(self.disc_lr > 0.0) {
            return Err(Error::InvalidInput("discriminator learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GailStep {
    pub iteration: usize,
    pub env_steps: usize,
    pub disc_loss: f64,
    /// Mean undiscounted environment return of episodes finished in the batch.
    pub batch_return: Option<f64>,
    pub update: UpdateStats,
}

pub struct GailOutcome {
    pub learner: PpoLearner,
    pub discriminator: Discriminator,
    pub trace: Vec<GailStep>,
}

/// Policy transitions of a batch as rows of `[s, s']`.
pub fn batch_transitions(batch: &Batch) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = batch
        .states
        .iter()
        .zip(&batch.next_states)
        .map(|(s, n)| s.iter().chain(n).copied().collect())
        .collect();
    Tensor::from_rows(&rows)
}

fn select_rows(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let d = x.cols();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::matrix(idx.len(), d, data)
}

/// Alternates policy rollouts in `env`, discriminator steps against
/// minibatches from `pool`, and policy updates on the reward `-log D(s, s')`.
/// `observe` runs after every iteration.
pub fn gail_loop(
    env: &mut dyn Env,
    pool: &mut DemoPool,
    rl: &RlHyper,
    gail: &GailHyper,
    rng: &mut SeededRng,
    mut observe: impl FnMut(&GailStep, &PpoLearner) -> Result<()>,
) -> Result<GailOutcome> {
    rl.validate()?;
    gail.validate()?;
    let state_dim = env.state_dim();
    if pool.features().cols() != 2 * state_dim {
        return Err(Error::Shape(format!(
            "demonstration transitions of width {} for a {state_dim}-dim environment",
            pool.features().cols()
        )));
    }
    let mut learner = PpoLearner::new(state_dim, rl.clone(), rng);
    let mut disc = Discriminator::new(2 * state_dim, gail.disc_hidden, InputScale::fit(pool.features()), rng);
    let mut disc_opt = Adam::new(&disc, AdamConfig::with_lr(gail.disc_lr));
    let mut trace = Vec::with_capacity(gail.iterations);

    for iteration in 0..gail.iterations {
        let mut batch = collect_batch(env, &learner.policy, |_, _| 0.0, rl.steps_per_batch, rng);
        let policy_x = batch_transitions(&batch)?;

        let mut disc_loss = 0.0;
        let mut steps = 0.0;
        let mut order: Vec<usize> = (0..policy_x.rows()).collect();
        for _ in 0..gail.disc_epochs {
            order.shuffle(rng);
            for chunk in order.chunks(gail.disc_minibatch) {
                let p = select_rows(&policy_x, chunk)?;
                let d = pool.minibatch(chunk.len(), rng);
                let (loss, grads) = discriminator_loss_grad(&disc, &d, &p)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("discriminator loss at iteration {iteration}")));
                }
                disc_opt.step(&mut disc, &grads)?;
                disc_loss += loss;
                steps += 1.0;
            }
        }

        batch.rewards = disc.rewards(&policy_x)?;
        let update = learner.update(&batch, rng)?;
        let batch_return = if batch.finished.is_empty() {
            None
        } else {
            Some(batch.finished.iter().map(|f| f.0).sum::<f64>() / batch.finished.len() as f64)
        };
        let step = GailStep {
            iteration,
            env_steps: (iteration + 1) * rl.steps_per_batch,
            disc_loss: disc_loss / steps,
            batch_return,
            update,
        };
        observe(&step, &learner)?;
        trace.push(step);
    }
    Ok(GailOutcome {
        learner,
        discriminator: disc,
        trace,
    })
}
