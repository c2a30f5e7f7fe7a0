//! Sequence-based contrastive clustering of demonstrations.
//!
//! An LSTM encoder is trained so that two random windows of the same
//! trajectory map to nearby points on the unit sphere, while a set of
//! cluster centers is learned jointly on the same features.

mod kmeans;
mod objective;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use kmeans::{best_seeding, refine_picks, kmeans_baseline, lloyd, potential, seed_plus_plus};
pub use objective::{
    assign, assign_among, blend_centers, cluster_loss, cluster_loss_grad, contrastive_loss,
    contrastive_loss_grad, squared_distance, update_centers,
};

use crate::demos::{subsample, subsample_pair, Corpus, SubTrajectory, Trajectory};
use crate::error::{Error, Result};
use crate::numcore::{Adam, AdamConfig, Checkpoint, Lstm, Parameters, Tensor};
use crate::{par, SeededRng};

/// Sequences per parallel encoding chunk. Fixed, so gradient sums do not
/// depend on the number of worker threads.
const ENCODE_CHUNK: usize = 32;

/// Candidate center seedings drawn at initialization; the one with the
/// lowest potential is kept.
const INIT_DRAWS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterHyper {
    pub k: usize,
    pub sub_len: usize,
    pub stride: usize,
    pub lambda: f64,
    pub lr: f64,
    /// Trajectories per batch; each contributes two windows.
    pub batch_trajectories: usize,
    pub pretrain_iters: usize,
    pub joint_iters: usize,
    pub hidden: usize,
    /// Append per-step state differences to the encoder input.
    pub step_deltas: bool,
}

impl Default for ClusterHyper {
    fn default() -> Self {
        Self {
            k: 10,
            sub_len: 15,
            stride: 1,
            lambda: 0.01,
            lr: 3e-4,
            batch_trajectories: 64,
            pretrain_iters: 200,
            joint_iters: 2000,
            hidden: 128,
            step_deltas: true,
        }
    }
}

impl ClusterHyper {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.sub_len == 0 || self.stride == 0 || self.hidden == 0 {
            return Err(Error::InvalidInput(
                "k, sub_len, stride and hidden must be positive".into(),
            ));
        }
        if self.batch_trajectories == 0 {
            return Err(Error::InvalidInput("batch must hold at least one trajectory".into()));
        }
        if !(self.lambda >= 0.0) || !(self.lr > 0.0) {
            return Err(Error::InvalidInput("lambda must be >= 0 and lr > 0".into()));
        }
        Ok(())
    }
}

/// Encoder input map: each state standardized to zero mean and unit variance
/// on the training corpus, optionally followed by its step difference from
/// the previous state scaled to unit root-mean-square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Empty when step differences are not appended.
    pub delta_scale: Vec<f64>,
}

fn inverse_or_one(v: f64) -> f64 {
    if v > 1e-12 {
        1.0 / v
    } else {
        1.0
    }
}

impl Standardizer {
    pub fn fit(corpus: &Corpus, deltas: bool) -> Self {
        let d = corpus.state_dim();
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut dsq = vec![0.0; d];
        let mut n = 0.0;
        let mut nd = 0.0;
        for t in corpus.trajectories() {
            for (i, s) in t.states.iter().enumerate() {
                for j in 0..d {
                    sum[j] += s[j];
                    sq[j] += s[j] * s[j];
                    if i > 0 {
                        let dv = s[j] - t.states[i - 1][j];
                        dsq[j] += dv * dv;
                    }
                }
                n += 1.0;
                if i > 0 {
                    nd += 1.0;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / n).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| inverse_or_one((q / n - m * m).max(0.0).sqrt()))
            .collect();
        let delta_scale = if deltas {
            dsq.iter().map(|q| inverse_or_one((q / nd).sqrt())).collect()
        } else {
            Vec::new()
        };
        Self {
            mean,
            scale,
            delta_scale,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.mean.len()
    }

    /// Width of the transformed rows fed to the encoder.
    pub fn output_dim(&self) -> usize {
        self.mean.len() + self.delta_scale.len()
    }

    pub fn apply(&self, windows: &mut [SubTrajectory]) {
        let d = self.state_dim();
        let out = self.output_dim();
        for w in windows {
            let rows = w.states.rows();
            let src = w.states.data();
            let mut data = Vec::with_capacity(rows * out);
            for t in 0..rows {
                let s = &src[t * d..(t + 1) * d];
                data.extend((0..d).map(|j| (s[j] - self.mean[j]) * self.scale[j]));
                if !self.delta_scale.is_empty() {
                    let prev = if t == 0 { s } else { &src[(t - 1) * d..t * d] };
                    data.extend((0..d).map(|j| (s[j] - prev[j]) * self.delta_scale[j]));
                }
            }
            w.states = Tensor::matrix(rows, out, data).expect("sized above");
        }
    }
}

/// Trained encoder and centers (`[K × hidden]`, one unit-norm row per cluster).
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub standardizer: Standardizer,
    pub encoder: Lstm,
    pub centers: Tensor,
    pub hyper: ClusterHyper,
}

/// Per-iteration loss record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterTrace {
    pub pretrain_loss: Vec<f64>,
    pub joint_loss: Vec<f64>,
}

/// Cluster index (0-based) of every trajectory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: BTreeMap<u64, usize>,
}

impl ClusterAssignment {
    pub fn label(&self, id: u64) -> Option<usize> {
        self.labels.get(&id).copied()
    }

    pub fn members(&self, cluster: usize) -> Vec<u64> {
        self.labels
            .iter()
            .filter(|(_, &l)| l == cluster)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in self.labels.values() {
            s[l] += 1;
        }
        s
    }

    /// JSON document with 1-based labels: `{"k": K, "labels": {"<id>": label}}`.
    pub fn to_json(&self) -> Result<String> {
        let file = LabelsFile {
            k: self.k,
            labels: self.labels.iter().map(|(id, l)| (id.to_string(), l + 1)).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: LabelsFile = serde_json::from_str(s)?;
        let mut labels = BTreeMap::new();
        for (id, l) in file.labels {
            let id: u64 = id
                .parse()
                .map_err(|_| Error::InvalidInput(format!("trajectory id {id:?} is not an integer")))?;
            if l == 0 || l > file.k {
                return Err(Error::InvalidInput(format!("label {l} outside 1..={}", file.k)));
            }
            labels.insert(id, l - 1);
        }
        Ok(Self { k: file.k, labels })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LabelsFile {
    k: usize,
    labels: BTreeMap<String, usize>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.standardizer.state_dim()
    }

    /// Unit-norm features of the given windows, one row each.
    pub fn encode(&self, windows: &[SubTrajectory]) -> Result<Tensor> {
        let mut w = windows.to_vec();
        self.standardizer.apply(&mut w);
        encode_windows(&self.encoder, &w)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new("cluster_model");
        ck.insert_params("encoder", &self.encoder);
        ck.tensors.insert("centers".into(), self.centers.clone());
        ck.set_meta("hyper", &self.hyper)?;
        ck.set_meta("standardizer", &self.standardizer)?;
        ck.set_meta("input_dim", &self.encoder.input_dim())?;
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("cluster_model")?;
        let hyper: ClusterHyper = ck.meta("hyper")?;
        let input_dim: usize = ck.meta("input_dim")?;
        let mut encoder = Lstm {
            w_input: Tensor::zeros(&[input_dim, 4 * hyper.hidden]),
            w_hidden: Tensor::zeros(&[hyper.hidden, 4 * hyper.hidden]),
            bias: Tensor::zeros(&[4 * hyper.hidden]),
        };
        ck.load_params("encoder", &mut encoder)?;
        let centers = ck.tensor("centers")?.clone();
        if centers.cols() != hyper.hidden {
            return Err(Error::Checkpoint("center dimension differs from encoder".into()));
        }
        let standardizer: Standardizer = ck.meta("standardizer")?;
        if standardizer.output_dim() != input_dim || standardizer.scale.len() != standardizer.state_dim() {
            return Err(Error::Checkpoint("standardizer dimension differs from encoder".into()));
        }
        Ok(Self {
            standardizer,
            encoder,
            centers,
            hyper,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Encodes windows in fixed-size chunks, fanned out over [`par`].
pub fn encode_windows(encoder: &Lstm, windows: &[SubTrajectory]) -> Result<Tensor> {
    let chunks: Vec<&[SubTrajectory]> = windows.chunks(ENCODE_CHUNK).collect();
    let outs = par::map_slice(&chunks, |chunk| {
        let seqs: Vec<&Tensor> = chunk.iter().map(|w| &w.states).collect();
        encoder.forward_batch(&seqs).map(|c| c.into_output())
    });
    let mut data = Vec::with_capacity(windows.len() * encoder.hidden());
    for o in outs {
        data.extend_from_slice(o?.data());
    }
    Tensor::matrix(windows.len(), encoder.hidden(), data)
}

/// Features plus encoder gradient of `feature_grad ⊙ features` summed in chunk order.
fn encode_and_backprop<G>(encoder: &Lstm, windows: &[SubTrajectory], loss_grad: G) -> Result<(f64, Tensor, Lstm)>
where
    G: FnOnce(&Tensor) -> Result<(f64, Tensor)>,
{
    let chunks: Vec<&[SubTrajectory]> = windows.chunks(ENCODE_CHUNK).collect();
    let caches = par::map_slice(&chunks, |chunk| {
        let seqs: Vec<&Tensor> = chunk.iter().map(|w| &w.states).collect();
        encoder.forward_batch(&seqs)
    });
    let caches: Vec<_> = caches.into_iter().collect::<Result<_>>()?;
    let h = encoder.hidden();
    let mut data = Vec::with_capacity(windows.len() * h);
    for c in &caches {
        data.extend_from_slice(c.output().data());
    }
    let features = Tensor::matrix(windows.len(), h, data)?;
    let (loss, dfeat) = loss_grad(&features)?;
    let offsets: Vec<usize> = (0..caches.len()).map(|i| i * ENCODE_CHUNK).collect();
    let grads = par::map_range(caches.len(), |i| {
        let rows = caches[i].output().rows();
        let start = offsets[i] * h;
        let d = Tensor::matrix(rows, h, dfeat.data()[start..start + rows * h].to_vec())?;
        encoder.backward_batch(&caches[i], &d)
    });
    let mut total = encoder.zeros_like();
    for g in grads {
        total.accumulate(&g?, 1.0);
    }
    Ok((loss, features, total))
}

fn sample_batch(corpus: &Corpus, hyper: &ClusterHyper, scaler: &Standardizer, rng: &mut SeededRng) -> Vec<SubTrajectory> {
    let n = hyper.batch_trajectories.min(corpus.len());
    let picks = sample(rng, corpus.len(), n).into_vec();
    let mut windows = Vec::with_capacity(2 * n);
    for i in picks {
        let (a, b) = subsample_pair(&corpus.trajectories()[i], hyper.sub_len, hyper.stride, rng);
        windows.push(a);
        windows.push(b);
    }
    scaler.apply(&mut windows);
    windows
}

fn check_finite(loss: f64, stage: &str, iter: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{stage} loss at iteration {iter}")))
    }
}

/// Trains encoder and centers: contrast-only pretraining, center
/// initialization from `k` distinct trajectories, then joint iterations of
/// assign → encoder step → reassign → center update.
pub fn train_scc(corpus: &Corpus, hyper: &ClusterHyper, rng: &mut SeededRng) -> Result<(ClusterModel, ClusterTrace)> {
    hyper.validate()?;
    if hyper.k > corpus.len() {
        return Err(Error::InvalidInput(format!(
            "{} clusters requested for {} trajectories",
            hyper.k,
            corpus.len()
        )));
    }
    let scaler = Standardizer::fit(corpus, hyper.step_deltas);
    let mut encoder = Lstm::new(scaler.output_dim(), hyper.hidden, rng);
    let mut opt = Adam::new(&encoder, AdamConfig::with_lr(hyper.lr));
    let mut trace = ClusterTrace::default();

    for it in 0..hyper.pretrain_iters {
        let windows = sample_batch(corpus, hyper, &scaler, rng);
        let (loss, _, grads) = encode_and_backprop(&encoder, &windows, contrastive_loss_grad)?;
        check_finite(loss, "pretraining", it)?;
        opt.step(&mut encoder, &grads)?;
        trace.pretrain_loss.push(loss);
    }

    let mut centers = init_centers(&encoder, corpus, hyper, &scaler, rng)?;

    for it in 0..hyper.joint_iters {
        let windows = sample_batch(corpus, hyper, &scaler, rng);
        let (loss, _, grads) = encode_and_backprop(&encoder, &windows, |f| {
            let labels = assign(f, &centers)?;
            cluster_loss_grad(f, &centers, &labels, hyper.lambda)
        })?;
        check_finite(loss, "joint", it)?;
        opt.step(&mut encoder, &grads)?;
        let features = encode_windows(&encoder, &windows)?;
        let labels = assign(&features, &centers)?;
        centers = update_centers(&centers, &features, &labels)?;
        trace.joint_loss.push(loss);
    }

    Ok((
        ClusterModel {
            standardizer: scaler,
            encoder,
            centers,
            hyper: hyper.clone(),
        },
        trace,
    ))
}

/// Centers from the encodings of one window of each of `k` distinct
/// trajectories, chosen with squared-distance weighting.
fn init_centers(
    encoder: &Lstm,
    corpus: &Corpus,
    hyper: &ClusterHyper,
    scaler: &Standardizer,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    let mut windows: Vec<SubTrajectory> = corpus
        .trajectories()
        .iter()
        .map(|t| subsample(t, hyper.sub_len, hyper.stride, rng))
        .collect();
    scaler.apply(&mut windows);
    let features = encode_windows(encoder, &windows)?;
    let picks = best_seeding(&features, hyper.k, INIT_DRAWS, rng);
    let picks = refine_picks(&features, &picks);
    let rows: Vec<Vec<f64>> = picks.iter().map(|&i| features.row(i).to_vec()).collect();
    Tensor::from_rows(&rows)
}

/// Labels each trajectory from one uniformly drawn window. No parameters change.
pub fn label_corpus(model: &ClusterModel, corpus: &Corpus, rng: &mut SeededRng) -> Result<ClusterAssignment> {
    label_corpus_among(model, corpus, None, rng)
}

/// [`label_corpus`] restricted to clusters whose `allowed` flag is set.
pub fn label_corpus_among(
    model: &ClusterModel,
    corpus: &Corpus,
    allowed: Option<&[bool]>,
    rng: &mut SeededRng,
) -> Result<ClusterAssignment> {
    if corpus.state_dim() != model.state_dim() {
        return Err(Error::Shape(format!(
            "corpus state dim {} differs from encoder input {}",
            corpus.state_dim(),
            model.state_dim()
        )));
    }
    let windows: Vec<SubTrajectory> = corpus
        .trajectories()
        .iter()
        .map(|t| subsample(t, model.hyper.sub_len, model.hyper.stride, rng))
        .collect();
    let features = model.encode(&windows)?;
    let labels = assign_among(&features, &model.centers, allowed)?;
    Ok(ClusterAssignment {
        k: model.k(),
        labels: corpus
            .trajectories()
            .iter()
            .map(|t| t.id)
            .zip(labels)
            .collect(),
    })
}

/// Fraction of trajectories whose cluster's majority tag equals their own.
pub fn purity(assignment: &ClusterAssignment, tags: &HashMap<u64, String>) -> f64 {
    let mut counts: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
    let mut total = 0usize;
    for (id, &label) in &assignment.labels {
        if let Some(tag) = tags.get(id) {
            *counts.entry(label).or_default().entry(tag.as_str()).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return 0.0;
    }
    let hits: usize = counts.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    hits as f64 / total as f64
}

/// Ground-truth tags as used for purity: each trajectory's `source_tag`.
pub fn source_tags(trajectories: &[Trajectory]) -> HashMap<u64, String> {
    trajectories.iter().map(|t| (t.id, t.source_tag.clone())).collect()
}

/// Uniformly random labels, for purity baselines.
pub fn random_assignment(ids: &[u64], k: usize, rng: &mut SeededRng) -> ClusterAssignment {
    ClusterAssignment {
        k,
        labels: ids.iter().map(|&id| (id, rng.random_range(0..k))).collect(),
    }
}
