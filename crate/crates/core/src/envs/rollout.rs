use super::{Env, Outcome};
use crate::SeededRng;

/// Anything that maps a state to an action.
pub trait Actor {
    fn act(&self, state: &[f64], rng: &mut SeededRng) -> f64;
}

impl<F> Actor for F
where
    F: Fn(&[f64], &mut SeededRng) -> f64,
{
    fn act(&self, state: &[f64], rng: &mut SeededRng) -> f64 {
        self(state, rng)
    }
}

/// Record of one episode. `states` holds one more entry than `actions`.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub outcome: Outcome,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards
            .iter()
            .rev()
            .fold(0.0, |acc, r| r + gamma * acc)
    }
}

pub fn rollout(
    env: &mut dyn Env,
    actor: &dyn Actor,
    rng: &mut SeededRng,
    max_steps: usize,
) -> Episode {
    let start = env.reset(rng);
    run(env, start, actor, rng, max_steps)
}

pub fn rollout_from(
    env: &mut dyn Env,
    start: &[f64],
    actor: &dyn Actor,
    rng: &mut SeededRng,
    max_steps: usize,
) -> Episode {
    env.reset_to(start);
    run(env, start.to_vec(), actor, rng, max_steps)
}

fn run(
    env: &mut dyn Env,
    start: Vec<f64>,
    actor: &dyn Actor,
    rng: &mut SeededRng,
    max_steps: usize,
) -> Episode {
    let mut states = vec![start];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut outcome = Outcome::Running;
    while actions.len() < max_steps {
        let a = actor.act(states.last().unwrap(), rng);
        let r = env.step(a);
        actions.push(a);
        rewards.push(r.reward);
        states.push(r.next_state);
        outcome = r.outcome;
        if outcome.is_terminal() {
            break;
        }
    }
    if outcome == Outcome::Running {
        outcome = Outcome::Timeout;
    }
    Episode {
        states,
        actions,
        rewards,
        outcome,
    }
}
