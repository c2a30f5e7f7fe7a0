use std::collections::{BTreeSet, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demos::Transition;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::SeededRng;

/// `p(τ) = w(τ) / Σ w`.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidInput(format!("transferability weight {bad} is not a finite non-negative value")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("all transferability weights are zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Fixed distribution over demonstration transitions, keyed by
/// `(trajectory_id, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    pub keys: Vec<(u64, usize)>,
    pub probs: Vec<f64>,
}

impl SamplingDistribution {
    pub fn from_weights(keys: Vec<(u64, usize)>, weights: &[f64]) -> Result<Self> {
        if keys.len() != weights.len() {
            return Err(Error::Shape(format!("{} keys for {} weights", keys.len(), weights.len())));
        }
        Ok(Self {
            keys,
            probs: normalize_weights(weights)?,
        })
    }

    pub fn uniform(keys: Vec<(u64, usize)>) -> Result<Self> {
        let w = vec![1.0; keys.len()];
        Self::from_weights(keys, &w)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] == w[1])
    }
}

enum Picker {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

/// Demonstration transitions with a minibatch sampler that records which
/// trajectories it has handed out.
pub struct DemoPool {
    features: Tensor,
    trajectory_ids: Vec<u64>,
    picker: Picker,
    accessed: BTreeSet<u64>,
}

impl DemoPool {
    /// Uniform sampling over `transitions`.
    pub fn uniform(transitions: &[Transition]) -> Result<Self> {
        Self::build(transitions, None)
    }

    /// Sampling from `dist`. Probabilities are matched to `transitions` by
    /// `(trajectory_id, t)`, so the two may be listed in different orders.
    pub fn weighted(transitions: &[Transition], dist: &SamplingDistribution) -> Result<Self> {
        let s: f64 = dist.probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 || dist.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput("sampling probabilities must be non-negative and sum to 1".into()));
        }
        let by_key: HashMap<(u64, usize), f64> = dist.keys.iter().copied().zip(dist.probs.iter().copied()).collect();
        if by_key.len() != dist.keys.len() || dist.keys.len() != transitions.len() {
            return Err(Error::InvalidInput("sampling distribution keys do not match the transitions".into()));
        }
        let probs = transitions
            .iter()
            .map(|t| {
                by_key.get(&(t.trajectory_id, t.t)).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("no sampling weight for transition ({}, {})", t.trajectory_id, t.t))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::build(transitions, Some(&probs))
    }

    fn build(transitions: &[Transition], probs: Option<&[f64]>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::InvalidInput("no demonstration transitions".into()));
        }
        let rows: Vec<Vec<f64>> = transitions.iter().map(|t| t.features()).collect();
        let picker = match probs {
            Some(p) if !p.windows(2).all(|w| w[0] == w[1]) => Picker::Weighted(
                WeightedIndex::new(p).map_err(|e| Error::InvalidInput(format!("sampling distribution: {e}")))?,
            ),
            _ => Picker::Uniform(transitions.len()),
        };
        Ok(Self {
            features: Tensor::from_rows(&rows)?,
            trajectory_ids: transitions.iter().map(|t| t.trajectory_id).collect(),
            picker,
            accessed: BTreeSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.trajectory_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory_ids.is_empty()
    }

    /// Every transition as rows of `[s, s']`.
    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn draw_index(&mut self, rng: &mut SeededRng) -> usize {
        let i = match &self.picker {
            Picker::Uniform(n) => rng.random_range(0..*n),
            Picker::Weighted(w) => w.sample(rng),
        };
        self.accessed.insert(self.trajectory_ids[i]);
        i
    }

    /// `n` i.i.d. draws, as rows of `[s, s']`.
    pub fn minibatch(&mut self, n: usize, rng: &mut SeededRng) -> Tensor {
        let d = self.features.cols();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let i = self.draw_index(rng);
            data.extend_from_slice(self.features.row(i));
        }
        Tensor::matrix(n, d, data).expect("sized above")
    }

    /// Trajectory ids sampled so far.
    pub fn accessed(&self) -> &BTreeSet<u64> {
        &self.accessed
    }
}
