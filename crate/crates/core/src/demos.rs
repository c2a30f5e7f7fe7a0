//! Demonstration corpus: JSON-lines storage, transition enumeration and
//! fixed-length sub-trajectory sampling.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::SeededRng;

/// State-only demonstration. `source_tag` is bookkeeping for evaluation and
/// is never read by any learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub source_tag: String,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    trajectories: Vec<Trajectory>,
    state_dim: usize,
}

impl Corpus {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let Some(first) = trajectories.first() else {
            return Err(Error::InvalidInput("corpus has no trajectories".into()));
        };
        let state_dim = first.state_dim();
        let mut ids = BTreeSet::new();
        for (i, t) in trajectories.iter().enumerate() {
            check_trajectory(t, state_dim).map_err(|m| Error::InvalidInput(format!("trajectory {i}: {m}")))?;
            if !ids.insert(t.id) {
                return Err(Error::InvalidInput(format!("duplicate trajectory id {}", t.id)));
            }
        }
        Ok(Self {
            trajectories,
            state_dim,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Joins corpora in id order, so the result does not depend on the order
    /// of `parts`; ids must stay unique.
    pub fn merge(parts: Vec<Corpus>) -> Result<Corpus> {
        let mut all: Vec<Trajectory> = parts.into_iter().flat_map(|c| c.trajectories).collect();
        all.sort_by_key(|t| t.id);
        Corpus::new(all)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.trajectories {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut trajectories = Vec::new();
        let mut state_dim = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let t: Trajectory = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let dim = *state_dim.get_or_insert(t.state_dim());
            check_trajectory(&t, dim).map_err(|message| Error::Parse {
                line: line_no,
                message,
            })?;
            trajectories.push(t);
        }
        if trajectories.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no trajectories in file".into(),
            });
        }
        Corpus::new(trajectories)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

fn check_trajectory(t: &Trajectory, dim: usize) -> std::result::Result<(), String> {
    if t.states.len() < 2 {
        return Err(format!("trajectory {} needs at least two states", t.id));
    }
    if dim == 0 {
        return Err("zero-dimensional states".into());
    }
    for (k, s) in t.states.iter().enumerate() {
        if s.len() != dim {
            return Err(format!(
                "trajectory {} state {k} has dimension {}, expected {dim}",
                t.id,
                s.len()
            ));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(format!("trajectory {} state {k} is not finite", t.id));
        }
    }
    Ok(())
}

/// Fixed-length window of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct SubTrajectory {
    pub parent: u64,
    pub start: usize,
    /// `[len × state_dim]`.
    pub states: Tensor,
    /// The parent was shorter than the window and its final state was repeated.
    pub padded: bool,
}

/// Number of parent states a window of `len` states at `stride` spans.
pub fn window_span(len: usize, stride: usize) -> usize {
    (len - 1) * stride + 1
}

/// Window of `len` states at `stride` starting at `start`, padding past the
/// end of the trajectory by repeating its final state.
pub fn window(traj: &Trajectory, start: usize, len: usize, stride: usize) -> SubTrajectory {
    let last = traj.states.len() - 1;
    let dim = traj.state_dim();
    let mut data = Vec::with_capacity(len * dim);
    let mut padded = false;
    for k in 0..len {
        let idx = start + k * stride;
        if idx > last {
            padded = true;
        }
        data.extend_from_slice(&traj.states[idx.min(last)]);
    }
    SubTrajectory {
        parent: traj.id,
        start,
        states: Tensor::matrix(len, dim, data).expect("window is sized by construction"),
        padded,
    }
}

/// Number of valid window starts (at least one, padding if needed).
pub fn start_count(traj: &Trajectory, len: usize, stride: usize) -> usize {
    let span = window_span(len, stride);
    traj.states.len().saturating_sub(span) + 1
}

/// One window with a uniformly random start.
pub fn subsample(traj: &Trajectory, len: usize, stride: usize, rng: &mut SeededRng) -> SubTrajectory {
    assert!(len >= 1 && stride >= 1, "window length and stride must be positive");
    let start = rng.random_range(0..start_count(traj, len, stride));
    window(traj, start, len, stride)
}

/// Two independently drawn windows of the same trajectory (a positive pair).
pub fn subsample_pair(
    traj: &Trajectory,
    len: usize,
    stride: usize,
    rng: &mut SeededRng,
) -> (SubTrajectory, SubTrajectory) {
    let a = subsample(traj, len, stride, rng);
    let b = subsample(traj, len, stride, rng);
    (a, b)
}

/// A consecutive state pair of some demonstration.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub trajectory_id: u64,
    pub t: usize,
    pub state: Vec<f64>,
    pub next: Vec<f64>,
}

impl Transition {
    /// `[state, next]`, the discriminator input.
    pub fn features(&self) -> Vec<f64> {
        let mut f = self.state.clone();
        f.extend_from_slice(&self.next);
        f
    }
}

/// Every consecutive pair, in corpus order then time order.
pub fn transitions(corpus: &Corpus) -> Vec<Transition> {
    corpus
        .trajectories()
        .iter()
        .flat_map(trajectory_transitions)
        .collect()
}

pub fn trajectory_transitions(traj: &Trajectory) -> impl Iterator<Item = Transition> + '_ {
    traj.states.windows(2).enumerate().map(move |(t, w)| Transition {
        trajectory_id: traj.id,
        t,
        state: w[0].clone(),
        next: w[1].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn traj(id: u64, n: usize) -> Trajectory {
        Trajectory {
            id,
            source_tag: format!("src{}", id % 2),
            states: (0..n).map(|i| vec![i as f64 * 0.1 + id as f64, (i as f64).sqrt()]).collect(),
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut c = vec![traj(0, 5), traj(1, 7), traj(2, 3)];
        c[0].states[2][0] = 0.1 + 0.2;
        c[1].states[3][1] = 1.0 / 3.0;
        let corpus = Corpus::new(c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        corpus.save(&p).unwrap();
        let back = Corpus::load(&p).unwrap();
        for (a, b) in corpus.trajectories().iter().zip(back.trajectories()) {
            for (sa, sb) in a.states.iter().zip(&b.states) {
                for (x, y) in sa.iter().zip(sb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
        assert_eq!(back, corpus);
    }

    #[test]
    fn empty_and_ragged_files_rejected() {
        assert!(Corpus::from_jsonl("").is_err());
        let ragged = "{\"id\":0,\"source_tag\":\"a\",\"states\":[[0,0],[1,1]]}\n\
                      {\"id\":1,\"source_tag\":\"a\",\"states\":[[0,0],[1,1,1]]}\n";
        match Corpus::from_jsonl(ragged) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match Corpus::from_jsonl("{\"id\":0}\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Corpus::new(vec![traj(3, 4), traj(3, 5)]).is_err());
    }

    #[test]
    fn transition_enumeration() {
        let one = Corpus::new(vec![traj(0, 5)]).unwrap();
        assert_eq!(transitions(&one).len(), 4);
        let two = Corpus::new(vec![traj(0, 3), traj(1, 3)]).unwrap();
        let tr = transitions(&two);
        assert_eq!(tr.len(), 4);
        let keys: Vec<_> = tr.iter().map(|t| (t.trajectory_id, t.t)).collect();
        assert_eq!(keys, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(transitions(&two), tr);
        assert_eq!(tr[1].features(), [two.trajectories()[0].states[1].clone(), two.trajectories()[0].states[2].clone()].concat());
    }

    #[test]
    fn windows_within_bounds() {
        let t = traj(0, 100);
        let mut rng = SeededRng::seed_from_u64(4);
        for _ in 0..200 {
            let (a, b) = subsample_pair(&t, 15, 1, &mut rng);
            for w in [a, b] {
                assert_eq!(w.states.rows(), 15);
                assert!(w.start <= 85);
                assert!(!w.padded);
                assert_eq!(w.states.row(0), t.states[w.start].as_slice());
            }
        }
    }

    #[test]
    fn exact_length_trajectory_gives_whole_window() {
        let t = traj(0, 15);
        let mut rng = SeededRng::seed_from_u64(1);
        let (a, b) = subsample_pair(&t, 15, 1, &mut rng);
        assert_eq!(a, b);
        assert_eq!(a.start, 0);
        assert_eq!(a.states.row(14), t.states[14].as_slice());
    }

    #[test]
    fn short_trajectory_is_padded() {
        let t = traj(0, 11);
        let w = subsample(&t, 15, 1, &mut SeededRng::seed_from_u64(0));
        assert!(w.padded);
        assert_eq!(w.start, 0);
        for k in 10..15 {
            assert_eq!(w.states.row(k), t.states[10].as_slice());
        }
    }

    #[test]
    fn strided_windows() {
        let t = traj(0, 20);
        let w = window(&t, 2, 4, 3);
        let firsts: Vec<f64> = (0..4).map(|k| w.states.row(k)[0]).collect();
        assert_eq!(firsts, vec![0.2, 0.5, 0.8, 1.1].iter().map(|v| t.states[(v * 10.0f64).round() as usize][0]).collect::<Vec<_>>());
        assert_eq!(start_count(&t, 4, 3), 20 - 10 + 1);
    }

    #[test]
    fn seeded_pairs_reproduce() {
        let t = traj(0, 60);
        let a = subsample_pair(&t, 15, 2, &mut SeededRng::seed_from_u64(77));
        let b = subsample_pair(&t, 15, 2, &mut SeededRng::seed_from_u64(77));
        assert_eq!(a, b);
    }
}
