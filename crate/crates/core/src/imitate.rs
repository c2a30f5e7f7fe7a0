//! Final imitation on transferability-resampled demonstrations, the ablation
//! variants, and policy evaluation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_baseline, label_corpus, train_scc, ClusterAssignment, ClusterHyper};
use crate::demos::{transitions, Corpus};
use crate::envs::{rollout, Actor, Env, EnvConfig, Outcome};
use crate::error::{Error, Result};
use crate::rl::{Greedy, Policy, RlHyper};
use crate::transfer::{
    gail_loop, sampling_distribution, train_transferability, transition_weights, DemoPool, GailHyper, GailStep,
    SamplingDistribution, TransitionWeight,
};
use crate::SeededRng;

/// Independent generator streams of one run seed. Cluster trainings of the
/// transferability stage use streams `1..=K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Demos,
    Cluster,
    Label,
    Imitate,
    Eval,
}

pub fn stage_rng(seed: u64, stage: Stage) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(
        (1 << 32)
            + match stage {
                Stage::Demos => 0,
                Stage::Cluster => 1,
                Stage::Label => 2,
                Stage::Imitate => 3,
                Stage::Eval => 4,
            },
    );
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ours,
    OursWoCluster,
    NaiveGail,
    KmeansVariant,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Ours, Variant::OursWoCluster, Variant::NaiveGail, Variant::KmeansVariant];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ours => "ours",
            Variant::OursWoCluster => "ours_wo_cluster",
            Variant::NaiveGail => "naive_gail",
            Variant::KmeansVariant => "kmeans_variant",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub goal_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
}

/// Undiscounted return and outcome rates over `n` independent episodes.
pub fn evaluate(actor: &dyn Actor, env: &mut dyn Env, n: usize, rng: &mut SeededRng) -> Result<EvalStats> {
    if n == 0 {
        return Err(Error::InvalidInput("evaluation needs at least one episode".into()));
    }
    let mut returns = Vec::with_capacity(n);
    let (mut goal, mut collision, mut timeout) = (0usize, 0usize, 0usize);
    let max_steps = env.max_steps();
    for _ in 0..n {
        let ep = rollout(env, actor, rng, max_steps);
        returns.push(ep.undiscounted_return());
        match ep.outcome {
            Outcome::Goal => goal += 1,
            Outcome::Collision => collision += 1,
            _ => timeout += 1,
        }
    }
    let nf = n as f64;
    let mean = returns.iter().sum::<f64>() / nf;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / nf;
    Ok(EvalStats {
        episodes: n,
        mean_return: mean,
        std_return: var.sqrt(),
        goal_rate: goal as f64 / nf,
        collision_rate: collision as f64 / nf,
        timeout_rate: timeout as f64 / nf,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImitateHyper {
    pub gail: GailHyper,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for ImitateHyper {
    fn default() -> Self {
        Self {
            gail: GailHyper {
                iterations: 300,
                ..GailHyper::default()
            },
            eval_every: 10,
            eval_episodes: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_steps: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub goal_rate: f64,
}

pub struct Imitation {
    pub policy: Policy,
    pub curve: Vec<CurvePoint>,
    pub trace: Vec<GailStep>,
}

/// Adversarial imitation in `target` with demonstration minibatches drawn
/// from `p_w` (uniformly over all transitions when `None`). The mean action
/// is evaluated every `eval_every` iterations and after the last one.
pub fn train_weighted_gail(
    target: &EnvConfig,
    corpus: &Corpus,
    p_w: Option<&SamplingDistribution>,
    rl: &RlHyper,
    hyper: &ImitateHyper,
    rng: &mut SeededRng,
) -> Result<Imitation> {
    if hyper.eval_every == 0 || hyper.eval_episodes == 0 {
        return Err(Error::InvalidInput("evaluation interval and episode count must be positive".into()));
    }
    let demos = transitions(corpus);
    let mut pool = match p_w {
        Some(d) => DemoPool::weighted(&demos, d)?,
        None => DemoPool::uniform(&demos)?,
    };
    let mut env = target.build()?;
    let mut eval_env = target.build()?;
    let mut eval_rng = SeededRng::seed_from_u64(rng.random());
    let last = hyper.gail.iterations - 1;
    let mut curve = Vec::new();
    let out = gail_loop(env.as_mut(), &mut pool, rl, &hyper.gail, rng, |step, learner| {
        if (step.iteration + 1) % hyper.eval_every == 0 || step.iteration == last {
            let s = evaluate(&Greedy(&learner.policy), eval_env.as_mut(), hyper.eval_episodes, &mut eval_rng)?;
            curve.push(CurvePoint {
                env_steps: step.env_steps,
                mean_return: s.mean_return,
                std_return: s.std_return,
                goal_rate: s.goal_rate,
            });
        }
        Ok(())
    })?;
    Ok(Imitation {
        policy: out.learner.policy,
        curve,
        trace: out.trace,
    })
}

/// Every hyperparameter a variant run needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantConfig {
    pub cluster: ClusterHyper,
    pub rl: RlHyper,
    pub transfer: GailHyper,
    pub imitate: ImitateHyper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImitationRun {
    pub variant: Variant,
    pub seed: u64,
    /// Discriminators the transferability stage trained; 0 when it was skipped.
    pub discriminators: usize,
    pub curve: Vec<CurvePoint>,
    pub final_eval: EvalStats,
    #[serde(skip)]
    pub weights: Option<Vec<TransitionWeight>>,
}

/// Partition, transferability weights and sampler for one variant.
pub fn variant_weights(
    variant: Variant,
    corpus: &Corpus,
    target: &EnvConfig,
    config: &VariantConfig,
    seed: u64,
) -> Result<Option<(ClusterAssignment, usize, Vec<TransitionWeight>)>> {
    let assignment = match variant {
        Variant::NaiveGail => return Ok(None),
        Variant::Ours => {
            let (model, _) = train_scc(corpus, &config.cluster, &mut stage_rng(seed, Stage::Cluster))?;
            label_corpus(&model, corpus, &mut stage_rng(seed, Stage::Label))?
        }
        Variant::OursWoCluster => ClusterAssignment {
            k: 1,
            labels: corpus.trajectories().iter().map(|t| (t.id, 0)).collect(),
        },
        Variant::KmeansVariant => kmeans_baseline(
            corpus,
            config.cluster.k,
            config.cluster.sub_len,
            config.cluster.stride,
            &mut stage_rng(seed, Stage::Cluster),
        )?,
    };
    let model = train_transferability(corpus, &assignment, target, &config.rl, &config.transfer, seed)?;
    let weights = transition_weights(&model, corpus, &assignment)?;
    let trained = model.trained().iter().filter(|&&t| t).count();
    Ok(Some((assignment, trained, weights)))
}

/// One ablation run end to end; returns the run record and final policy.
pub fn run_variant(
    variant: Variant,
    corpus: &Corpus,
    target: &EnvConfig,
    config: &VariantConfig,
    seed: u64,
) -> Result<(ImitationRun, Policy)> {
    let stage = variant_weights(variant, corpus, target, config, seed)?;
    let (discriminators, weights, dist) = match stage {
        None => (0, None, None),
        Some((_, n, w)) => {
            let d = sampling_distribution(&w)?;
            (n, Some(w), Some(d))
        }
    };
    let imitation = train_weighted_gail(
        target,
        corpus,
        dist.as_ref(),
        &config.rl,
        &config.imitate,
        &mut stage_rng(seed, Stage::Imitate),
    )?;
    let mut env = target.build()?;
    let final_eval = evaluate(
        &Greedy(&imitation.policy),
        env.as_mut(),
        config.imitate.eval_episodes,
        &mut stage_rng(seed, Stage::Eval),
    )?;
    Ok((
        ImitationRun {
            variant,
            seed,
            discriminators,
            curve: imitation.curve,
            final_eval,
            weights,
        },
        imitation.policy,
    ))
}

/// Learning curves as CSV: variant, seed, env_steps, mean_return, goal_rate.
pub fn curves_to_csv(runs: &[ImitationRun]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "seed", "env_steps", "mean_return", "goal_rate"])?;
    for run in runs {
        for p in &run.curve {
            w.write_record([
                run.variant.as_str().to_string(),
                run.seed.to_string(),
                p.env_steps.to_string(),
                p.mean_return.to_string(),
                p.goal_rate.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::Trajectory;
    use crate::envs::{DrivingConfig, DrivingEnv, Gap, ScriptedDriver};
    use crate::numcore::Parameters;

    fn tiny() -> (RlHyper, ImitateHyper) {
        (
            RlHyper {
                steps_per_batch: 128,
                minibatch: 64,
                epochs: 2,
                hidden: 16,
                ..RlHyper::default()
            },
            ImitateHyper {
                gail: GailHyper {
                    iterations: 4,
                    disc_hidden: 16,
                    disc_minibatch: 64,
                    ..GailHyper::default()
                },
                eval_every: 2,
                eval_episodes: 3,
            },
        )
    }

    fn corpus() -> Corpus {
        Corpus::new(
            (0..4)
                .map(|i| Trajectory {
                    id: i,
                    source_tag: "s".into(),
                    states: (0..=8).map(|t| vec![0.5 + 0.05 * i as f64, 0.02 * t as f64]).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn target() -> EnvConfig {
        EnvConfig::Driving(DrivingConfig::target())
    }

    #[test]
    fn crashing_policy_statistics() {
        let mut env = DrivingEnv::new(DrivingConfig::target()).unwrap();
        // straight ahead from x = 0.25 hits the first obstacle
        let straight = |_: &[f64], _: &mut SeededRng| 0.0;
        let mut rng = SeededRng::seed_from_u64(0);
        for _ in 0..20 {
            let ep = crate::envs::rollout_from(&mut env, &[0.25, 0.0], &straight, &mut rng, 200);
            assert_eq!(ep.outcome, Outcome::Collision);
            assert!(ep.undiscounted_return() <= -1000.0 - ep.len() as f64 + 1.0 + 1e-9);
        }
    }

    #[test]
    fn scripted_rule_reaches_the_goal() {
        let config = DrivingConfig::target();
        let driver = ScriptedDriver::default();
        let gaps = config.feasible_gaps();
        let cfg = config.clone();
        let rule = move |s: &[f64], _: &mut SeededRng| {
            // head for the nearest wide-enough gap
            let gap = gaps
                .iter()
                .copied()
                .filter(|g| {
                    let (lo, hi) = cfg.gap_extent(*g);
                    hi - lo > 0.1
                })
                .min_by(|a, b| {
                    let c = |g: Gap| {
                        let (lo, hi) = cfg.gap_extent(g);
                        ((lo + hi) / 2.0 - s[0]).abs()
                    };
                    c(*a).total_cmp(&c(*b))
                })
                .unwrap();
            driver.command(&cfg, gap, s)
        };
        let mut env = DrivingEnv::new(config.clone()).unwrap();
        let stats = evaluate(&rule, &mut env, 20, &mut SeededRng::seed_from_u64(1)).unwrap();
        assert_eq!(stats.goal_rate, 1.0);
        let again = evaluate(&rule, &mut env, 20, &mut SeededRng::seed_from_u64(1)).unwrap();
        assert_eq!(stats, again);
        assert!((stats.goal_rate + stats.collision_rate + stats.timeout_rate - 1.0).abs() < 1e-12);
        assert!(evaluate(&rule, &mut env, 0, &mut SeededRng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn uniform_weights_reproduce_naive_run() {
        let (rl, hyper) = tiny();
        let c = corpus();
        let naive = train_weighted_gail(&target(), &c, None, &rl, &hyper, &mut SeededRng::seed_from_u64(3)).unwrap();
        let keys: Vec<_> = transitions(&c).iter().map(|t| (t.trajectory_id, t.t)).collect();
        let uniform = SamplingDistribution::from_weights(keys.clone(), &vec![0.37; keys.len()]).unwrap();
        let weighted =
            train_weighted_gail(&target(), &c, Some(&uniform), &rl, &hyper, &mut SeededRng::seed_from_u64(3)).unwrap();
        assert_eq!(naive.policy, weighted.policy);
        assert_eq!(naive.policy.flat(), weighted.policy.flat());
        assert_eq!(naive.curve, weighted.curve);
        // evaluations at iterations 2 and 4
        assert_eq!(naive.curve.iter().map(|p| p.env_steps).collect::<Vec<_>>(), vec![256, 512]);
    }

    #[test]
    fn invalid_distribution_rejected() {
        let (rl, hyper) = tiny();
        let c = corpus();
        let bad = SamplingDistribution {
            keys: vec![(0, 0)],
            probs: vec![1.0],
        };
        assert!(train_weighted_gail(&target(), &c, Some(&bad), &rl, &hyper, &mut SeededRng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn variant_structure() {
        let (rl, imitate) = tiny();
        let config = VariantConfig {
            rl,
            transfer: imitate.gail.clone(),
            imitate,
            cluster: ClusterHyper {
                k: 2,
                sub_len: 4,
                hidden: 8,
                batch_trajectories: 4,
                pretrain_iters: 3,
                joint_iters: 3,
                ..ClusterHyper::default()
            },
        };
        let c = corpus();
        let (naive, _) = run_variant(Variant::NaiveGail, &c, &target(), &config, 0).unwrap();
        assert_eq!(naive.discriminators, 0);
        assert!(naive.weights.is_none());
        let (wo, _) = run_variant(Variant::OursWoCluster, &c, &target(), &config, 0).unwrap();
        assert_eq!(wo.discriminators, 1);
        assert_eq!(wo.weights.as_ref().unwrap().len(), c.transition_count());
        let csv = curves_to_csv(&[naive, wo]).unwrap();
        assert!(csv.starts_with("variant,seed,env_steps,mean_return,goal_rate\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("gail".parse::<Variant>().is_err());
    }
}
