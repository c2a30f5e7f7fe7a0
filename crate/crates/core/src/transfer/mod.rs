//! Per-cluster adversarial transferability. Each cluster of demonstrations
//! gets its own policy/discriminator pair trained in the imitator's
//! environment; a transition's weight is its own cluster's discriminator
//! output, and the normalized weights form the demonstration sampler.

mod discriminator;
mod gail;
mod sampler;

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use discriminator::{discriminator_loss, discriminator_loss_grad, Discriminator, InputScale};
pub use gail::{batch_transitions, gail_loop, GailHyper, GailOutcome, GailStep};
pub use sampler::{normalize_weights, DemoPool, SamplingDistribution};

use crate::cluster::{label_corpus_among, ClusterAssignment, ClusterModel};
use crate::demos::{trajectory_transitions, Corpus, Transition};
use crate::envs::{Env, EnvConfig, FixedStarts};
use crate::error::{Error, Result};
use crate::numcore::{Checkpoint, Tensor};
use crate::rl::{Policy, RlHyper};
use crate::SeededRng;

const CHECKPOINT_KIND: &str = "transferability";

/// Result of one cluster's adversarial training.
pub struct ClusterGail {
    pub policy: Policy,
    pub discriminator: Discriminator,
    pub disc_loss: Vec<f64>,
    /// Trajectory ids the demonstration sampler handed out.
    pub accessed: BTreeSet<u64>,
}

/// Adversarial training against one cluster's transitions, with policy
/// rollouts in `target` started from the cluster's own initial states.
pub fn train_cluster_gail(
    target: &EnvConfig,
    cluster_demos: &[Transition],
    rl: &RlHyper,
    gail: &GailHyper,
    rng: &mut SeededRng,
) -> Result<ClusterGail> {
    if cluster_demos.is_empty() {
        return Err(Error::InvalidInput("cluster has no demonstration transitions".into()));
    }
    let starts: Vec<Vec<f64>> = cluster_demos.iter().filter(|t| t.t == 0).map(|t| t.state.clone()).collect();
    let mut env: Box<dyn Env> = if starts.is_empty() {
        target.build()?
    } else {
        Box::new(FixedStarts::new(target.build()?, starts)?)
    };
    let mut pool = DemoPool::uniform(cluster_demos)?;
    let out = gail_loop(env.as_mut(), &mut pool, rl, gail, rng, |_, _| Ok(()))?;
    Ok(ClusterGail {
        policy: out.learner.policy,
        discriminator: out.discriminator,
        disc_loss: out.trace.iter().map(|s| s.disc_loss).collect(),
        accessed: pool.accessed().clone(),
    })
}

/// Generator for cluster `k`'s training: one stream of the run seed per
/// cluster, so clusters are independent of each other and of scheduling.
pub fn cluster_rng(seed: u64, k: usize) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    rng
}

/// The per-cluster discriminators together with the partition they score.
/// Clusters without members have no discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferabilityModel {
    pub assignment: ClusterAssignment,
    pub discriminators: Vec<Option<Discriminator>>,
    pub disc_loss: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Trains every non-empty cluster of `corpus` under `assignment`.
pub fn train_transferability(
    corpus: &Corpus,
    assignment: &ClusterAssignment,
    target: &EnvConfig,
    rl: &RlHyper,
    gail: &GailHyper,
    seed: u64,
) -> Result<TransferabilityModel> {
    let per_cluster = cluster_transitions(corpus, assignment)?;
    let results = crate::par::map_range(assignment.k, |k| {
        if per_cluster[k].is_empty() {
            return Ok(None);
        }
        train_cluster_gail(target, &per_cluster[k], rl, gail, &mut cluster_rng(seed, k)).map(Some)
    });
    let mut discriminators = Vec::with_capacity(assignment.k);
    let mut disc_loss = Vec::with_capacity(assignment.k);
    for r in results {
        match r? {
            Some(c) => {
                discriminators.push(Some(c.discriminator));
                disc_loss.push(c.disc_loss);
            }
            None => {
                discriminators.push(None);
                disc_loss.push(Vec::new());
            }
        }
    }
    Ok(TransferabilityModel {
        assignment: assignment.clone(),
        discriminators,
        disc_loss,
        seed,
    })
}

/// Transitions of each cluster's member trajectories, in corpus order.
pub fn cluster_transitions(corpus: &Corpus, assignment: &ClusterAssignment) -> Result<Vec<Vec<Transition>>> {
    let mut out = vec![Vec::new(); assignment.k];
    for traj in corpus.trajectories() {
        let label = assignment
            .label(traj.id)
            .ok_or_else(|| Error::InvalidInput(format!("trajectory {} has no cluster label", traj.id)))?;
        if label >= assignment.k {
            return Err(Error::InvalidInput(format!("label {label} outside {} clusters", assignment.k)));
        }
        out[label].extend(trajectory_transitions(traj));
    }
    Ok(out)
}

/// One row of the weights table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionWeight {
    pub trajectory_id: u64,
    pub t: usize,
    pub w: f64,
}

impl TransferabilityModel {
    pub fn k(&self) -> usize {
        self.discriminators.len()
    }

    /// Which clusters have a discriminator.
    pub fn trained(&self) -> Vec<bool> {
        self.discriminators.iter().map(Option::is_some).collect()
    }

    fn discriminator(&self, label: usize) -> Result<&Discriminator> {
        self.discriminators
            .get(label)
            .ok_or_else(|| Error::InvalidInput(format!("cluster label {label} outside {} clusters", self.k())))?
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("cluster {label} has no trained discriminator")))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND);
        ck.set_meta("assignment", &self.assignment)?;
        ck.set_meta("trained", &self.trained())?;
        ck.set_meta("disc_loss", &self.disc_loss)?;
        ck.set_meta("seed", &self.seed)?;
        for (k, d) in self.discriminators.iter().enumerate() {
            if let Some(d) = d {
                d.write_checkpoint(&mut ck, &format!("d{k}"))?;
            }
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let trained: Vec<bool> = ck.meta("trained")?;
        let discriminators = trained
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                if t {
                    Discriminator::read_checkpoint(ck, &format!("d{k}")).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let assignment: ClusterAssignment = ck.meta("assignment")?;
        if assignment.k != discriminators.len() {
            return Err(Error::InvalidInput("assignment and discriminator counts differ".into()));
        }
        Ok(Self {
            assignment,
            discriminators,
            disc_loss: ck.meta("disc_loss")?,
            seed: ck.meta("seed")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// `w = D_k(s, s')` for a transition of a trajectory in cluster `label`.
pub fn transferability(model: &TransferabilityModel, transition: &Transition, label: usize) -> Result<f64> {
    let d = model.discriminator(label)?;
    if transition.state.len() * 2 != d.input_dim() || transition.next.len() != transition.state.len() {
        return Err(Error::Shape("transition width does not match the discriminator".into()));
    }
    Ok(d.prob(&transition.state, &transition.next))
}

/// Weight of every transition of `corpus`, each scored by the discriminator
/// of its trajectory's cluster under `labels`.
pub fn transition_weights(
    model: &TransferabilityModel,
    corpus: &Corpus,
    labels: &ClusterAssignment,
) -> Result<Vec<TransitionWeight>> {
    let mut out = Vec::with_capacity(corpus.transition_count());
    for traj in corpus.trajectories() {
        let label = labels
            .label(traj.id)
            .ok_or_else(|| Error::InvalidInput(format!("trajectory {} has no cluster label", traj.id)))?;
        let d = model.discriminator(label)?;
        let ts: Vec<Transition> = trajectory_transitions(traj).collect();
        if ts.is_empty() {
            continue;
        }
        let x = Tensor::from_rows(&ts.iter().map(Transition::features).collect::<Vec<_>>())?;
        for (tr, w) in ts.iter().zip(d.probs(&x)?) {
            out.push(TransitionWeight {
                trajectory_id: tr.trajectory_id,
                t: tr.t,
                w,
            });
        }
    }
    Ok(out)
}

/// Sampling distribution over transitions from their weights.
pub fn sampling_distribution(weights: &[TransitionWeight]) -> Result<SamplingDistribution> {
    SamplingDistribution::from_weights(
        weights.iter().map(|w| (w.trajectory_id, w.t)).collect(),
        &weights.iter().map(|w| w.w).collect::<Vec<_>>(),
    )
}

/// Labels a new corpus with the frozen cluster model, restricted to clusters
/// that have a discriminator, then scores each transition. Nothing is trained.
pub fn score_new(
    clusters: &ClusterModel,
    model: &TransferabilityModel,
    corpus: &Corpus,
    rng: &mut SeededRng,
) -> Result<(ClusterAssignment, Vec<TransitionWeight>)> {
    if clusters.k() != model.k() {
        return Err(Error::InvalidInput(format!(
            "cluster model has {} centers, transferability model {}",
            clusters.k(),
            model.k()
        )));
    }
    let labels = label_corpus_among(clusters, corpus, Some(&model.trained()), rng)?;
    let weights = transition_weights(model, corpus, &labels)?;
    Ok((labels, weights))
}

/// Weights table as CSV with a header row.
pub fn weights_to_csv(weights: &[TransitionWeight]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in weights {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn weights_from_csv(text: &str) -> Result<Vec<TransitionWeight>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
