//! K-means on flattened raw windows, used as a clustering baseline, plus the
//! squared-distance seeding shared with contrastive center initialization.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::objective::squared_distance;
use super::ClusterAssignment;
use crate::demos::{subsample, Corpus};
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::SeededRng;

const LLOYD_MAX_ITERS: usize = 300;

/// Picks `k` distinct row indices: the first uniformly, each following one
/// with probability proportional to its squared distance to the nearest pick.
/// Falls back to uniform among unpicked rows when all distances vanish.
pub fn seed_plus_plus(points: &Tensor, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let n = points.rows();
    let k = k.min(n);
    let mut picks = Vec::with_capacity(k);
    if k == 0 {
        return picks;
    }
    picks.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(picks[0])))
        .collect();
    while picks.len() < k {
        for &p in &picks {
            nearest[p] = 0.0;
        }
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|i| !picks.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        picks.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    picks
}

/// Sum over points of the squared distance to the nearest chosen row.
pub fn potential(points: &Tensor, picks: &[usize]) -> f64 {
    (0..points.rows())
        .map(|i| {
            picks
                .iter()
                .map(|&p| squared_distance(points.row(i), points.row(p)))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// The lowest-potential result of `draws` independent [`seed_plus_plus`]
/// runs (earliest wins ties).
pub fn best_seeding(points: &Tensor, k: usize, draws: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut best = seed_plus_plus(points, k, rng);
    let mut best_pot = potential(points, &best);
    for _ in 1..draws {
        let picks = seed_plus_plus(points, k, rng);
        let pot = potential(points, &picks);
        if pot < best_pot {
            best = picks;
            best_pot = pot;
        }
    }
    best
}

/// Runs Lloyd from the picked rows, then replaces each resulting mean by the
/// closest row not already taken, so the picks stay distinct data rows.
pub fn refine_picks(points: &Tensor, picks: &[usize]) -> Vec<usize> {
    let init = Tensor::from_rows(&picks.iter().map(|&i| points.row(i).to_vec()).collect::<Vec<_>>())
        .expect("rows of one matrix");
    let (means, _) = lloyd(points, init, LLOYD_MAX_ITERS);
    let mut taken = vec![false; points.rows()];
    let mut out = Vec::with_capacity(picks.len());
    for c in 0..means.rows() {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for i in 0..points.rows() {
            let d = squared_distance(points.row(i), means.row(c));
            if !taken[i] && d < best_d {
                best = i;
                best_d = d;
            }
        }
        taken[best] = true;
        out.push(best);
    }
    out
}

/// Lloyd iterations from `init` until labels stop changing. Empty clusters
/// keep their previous center. Returns centers and labels.
pub fn lloyd(points: &Tensor, init: Tensor, max_iters: usize) -> (Tensor, Vec<usize>) {
    let mut centers = init;
    let mut labels = nearest_labels(points, &centers);
    for _ in 0..max_iters {
        let k = centers.rows();
        let mut sums = Tensor::zeros(&[k, centers.cols()]);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let m = counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / m;
                }
            }
        }
        let next = nearest_labels(points, &centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    (centers, labels)
}

fn nearest_labels(points: &Tensor, centers: &Tensor) -> Vec<usize> {
    (0..points.rows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..centers.rows() {
                let d = squared_distance(points.row(i), centers.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Clusters trajectories by k-means over one flattened random window each.
pub fn kmeans_baseline(
    corpus: &Corpus,
    k: usize,
    sub_len: usize,
    stride: usize,
    rng: &mut SeededRng,
) -> Result<ClusterAssignment> {
    if k == 0 || k > corpus.len() {
        return Err(Error::InvalidInput(format!(
            "{k} clusters requested for {} trajectories",
            corpus.len()
        )));
    }
    let rows: Vec<Vec<f64>> = corpus
        .trajectories()
        .iter()
        .map(|t| subsample(t, sub_len, stride, rng).states.into_data())
        .collect();
    let points = Tensor::from_rows(&rows)?;
    let picks = seed_plus_plus(&points, k, rng);
    let init = Tensor::from_rows(&picks.iter().map(|&i| points.row(i).to_vec()).collect::<Vec<_>>())?;
    let (_, labels) = lloyd(&points, init, LLOYD_MAX_ITERS);
    Ok(ClusterAssignment {
        k,
        labels: corpus.trajectories().iter().map(|t| t.id).zip(labels).collect(),
    })
}
