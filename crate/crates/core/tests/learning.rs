use oodil::envs::{rollout, BanditConfig, BanditEnv, Env, PointMassConfig, PointMassEnv};
use oodil::rl::{collect_batch, Greedy, PpoLearner, RlHyper};
use oodil::SeededRng;
use rand::SeedableRng;

#[test]
fn bandit_mean_action_reaches_optimum() {
    let mut rng = SeededRng::seed_from_u64(3);
    let mut env = BanditEnv::new(BanditConfig { optimum: 0.5 });
    let hyper = RlHyper {
        steps_per_batch: 64,
        minibatch: 32,
        policy_lr: 1e-2,
        hidden: 8,
        ..RlHyper::default()
    };
    let mut learner = PpoLearner::new(1, hyper, &mut rng);
    for _ in 0..200 {
        let mut batch = collect_batch(&mut env, &learner.policy, |_, _| 0.0, 64, &mut rng);
        batch.rewards = batch.env_rewards.clone();
        learner.update(&batch, &mut rng).unwrap();
    }
    let a = learner.policy.greedy(&[0.0]);
    assert!((a - 0.5).abs() < 0.1, "mean action {a}");
}

fn greedy_returns(env: &mut PointMassEnv, learner: &PpoLearner, n: usize, rng: &mut SeededRng) -> Vec<f64> {
    let max = env.max_steps();
    (0..n).map(|_| rollout(env, &Greedy(&learner.policy), rng, max).undiscounted_return()).collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn pointmass_policy_beats_random() {
    let mut rng = SeededRng::seed_from_u64(11);
    let cfg = PointMassConfig::default();
    let mut env = PointMassEnv::new(cfg).unwrap();
    let hyper = RlHyper {
        steps_per_batch: 1000,
        minibatch: 100,
        hidden: 16,
        ..RlHyper::default()
    };
    let mut learner = PpoLearner::new(2, hyper, &mut rng);

    let max = env.max_steps();
    let random = |_: &[f64], r: &mut SeededRng| rand::Rng::random_range(r, -1.0..1.0);
    let baseline: Vec<f64> = (0..30).map(|_| rollout(&mut env, &random, &mut rng, max).undiscounted_return()).collect();

    for _ in 0..60 {
        let mut batch = collect_batch(&mut env, &learner.policy, |_, _| 0.0, 1000, &mut rng);
        batch.rewards = batch.env_rewards.clone();
        learner.update(&batch, &mut rng).unwrap();
    }
    let trained = greedy_returns(&mut env, &learner, 30, &mut rng);
    let (mb, sb) = mean_se(&baseline);
    let (mt, st) = mean_se(&trained);
    let se = (sb * sb + st * st).sqrt().max(1e-9);
    assert!(mt - mb > 3.0 * se, "trained {mt} vs random {mb} (se {se})");
}
