//! Loss terms and center updates of sequence-based contrastive clustering.
//!
//! Features are rows of a `[2N × dim]` matrix in which rows `2i` and
//! `2i + 1` are two windows of the same trajectory. Centers are rows of a
//! `[K × dim]` matrix.

use crate::error::{shape_err, Error, Result};
use crate::numcore::{dot, l2_norm, Tensor};

const UNIT_TOL: f64 = 1e-6;

fn check_pairs(features: &Tensor) -> Result<usize> {
    let rows = features.rows();
    if rows == 0 || rows % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "contrastive batch needs an even, nonzero number of features, got {rows}"
        )));
    }
    for i in 0..rows {
        let n = l2_norm(features.row(i));
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!("feature {i} has norm {n}, expected 1")));
        }
    }
    Ok(rows / 2)
}

/// Pairwise InfoNCE loss with the first window of each pair as anchor and
/// all other windows in the batch as the candidate set (temperature 1).
pub fn contrastive_loss(features: &Tensor) -> Result<f64> {
    Ok(contrastive_loss_grad(features)?.0)
}

/// Loss value and its gradient with respect to every feature row.
pub fn contrastive_loss_grad(features: &Tensor) -> Result<(f64, Tensor)> {
    let n = check_pairs(features)?;
    let rows = 2 * n;
    let dim = features.cols();
    let mut grad = Tensor::zeros(&[rows, dim]);
    let mut total = 0.0;
    let scale = 1.0 / n as f64;
    let mut sims = vec![0.0; rows];
    for i in 0..n {
        let a = 2 * i;
        let p = a + 1;
        let fa = features.row(a);
        for (j, s) in sims.iter_mut().enumerate() {
            *s = if j == a { f64::NEG_INFINITY } else { dot(fa, features.row(j)) };
        }
        let m = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = sims.iter().map(|&s| (s - m).exp()).collect();
        let z: f64 = weights.iter().sum();
        // -(s_p - m) + ln z; exactly zero when the positive is the only candidate
        total += (m - sims[p]) + z.ln();

        let mut ga = vec![0.0; dim];
        for j in 0..rows {
            if j == a {
                continue;
            }
            let coef = weights[j] / z - if j == p { 1.0 } else { 0.0 };
            if coef == 0.0 {
                continue;
            }
            let fj = features.row(j);
            for (g, v) in ga.iter_mut().zip(fj) {
                *g += coef * v;
            }
            for (g, v) in grad.row_mut(j).iter_mut().zip(fa) {
                *g += scale * coef * v;
            }
        }
        for (g, v) in grad.row_mut(a).iter_mut().zip(&ga) {
            *g += scale * v;
        }
    }
    Ok((total * scale, grad))
}

/// Index of the nearest center for every feature row; ties go to the lowest index.
pub fn assign(features: &Tensor, centers: &Tensor) -> Result<Vec<usize>> {
    assign_among(features, centers, None)
}

/// Like [`assign`] but only considers centers whose `allowed` flag is set.
pub fn assign_among(features: &Tensor, centers: &Tensor, allowed: Option<&[bool]>) -> Result<Vec<usize>> {
    if features.cols() != centers.cols() {
        return shape_err(format!(
            "features have dim {}, centers have dim {}",
            features.cols(),
            centers.cols()
        ));
    }
    let k = centers.rows();
    if k == 0 {
        return Err(Error::InvalidInput("no cluster centers".into()));
    }
    if let Some(mask) = allowed {
        if mask.len() != k || !mask.iter().any(|&m| m) {
            return Err(Error::InvalidInput("center mask excludes every cluster".into()));
        }
    }
    Ok((0..features.rows())
        .map(|i| {
            let f = features.row(i);
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                if allowed.is_some_and(|m| !m[c]) {
                    continue;
                }
                let d = squared_distance(f, centers.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect())
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Joint objective: contrastive loss plus `λ/2` times the batch mean of the
/// squared distance from each feature to its assigned center. Centers and
/// labels are held fixed, so the gradient is with respect to features only.
pub fn cluster_loss_grad(
    features: &Tensor,
    centers: &Tensor,
    labels: &[usize],
    lambda: f64,
) -> Result<(f64, Tensor)> {
    if labels.len() != features.rows() {
        return shape_err("one label per feature required");
    }
    let (contrast, mut grad) = contrastive_loss_grad(features)?;
    let rows = features.rows() as f64;
    let mut pull = 0.0;
    for (i, &k) in labels.iter().enumerate() {
        let c = centers.row(k);
        let f = features.row(i).to_vec();
        pull += squared_distance(&f, c);
        for ((g, fv), cv) in grad.row_mut(i).iter_mut().zip(&f).zip(c) {
            *g += lambda / rows * (fv - cv);
        }
    }
    Ok((contrast + lambda / 2.0 * pull / rows, grad))
}

pub fn cluster_loss(features: &Tensor, centers: &Tensor, labels: &[usize], lambda: f64) -> Result<f64> {
    Ok(cluster_loss_grad(features, centers, labels, lambda)?.0)
}

/// Online center step without renormalization:
/// `c_k ← (1 − β) c_k + β · mean(members)` with `β = 1 / m_k`.
pub fn blend_centers(centers: &Tensor, features: &Tensor, labels: &[usize]) -> Tensor {
    let k = centers.rows();
    let dim = centers.cols();
    let mut sums = Tensor::zeros(&[k, dim]);
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums.row_mut(c).iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    let mut out = centers.clone();
    for c in 0..k {
        let m = counts[c];
        if m == 0 {
            continue;
        }
        let beta = 1.0 / m as f64;
        let mean: Vec<f64> = sums.row(c).iter().map(|s| s / m as f64).collect();
        for (o, mv) in out.row_mut(c).iter_mut().zip(&mean) {
            *o = (1.0 - beta) * *o + beta * mv;
        }
    }
    out
}

/// [`blend_centers`] followed by projection of every updated center back onto
/// the unit sphere. Empty clusters keep their center.
pub fn update_centers(centers: &Tensor, features: &Tensor, labels: &[usize]) -> Result<Tensor> {
    if features.cols() != centers.cols() || labels.len() != features.rows() {
        return shape_err("center update dimensions");
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= centers.rows()) {
        return Err(Error::InvalidInput(format!("label {bad} out of range")));
    }
    let mut out = blend_centers(centers, features, labels);
    for c in 0..out.rows() {
        if !labels.contains(&c) {
            out.row_mut(c).copy_from_slice(centers.row(c));
            continue;
        }
        let n = l2_norm(out.row(c));
        if n > 0.0 {
            out.row_mut(c).iter_mut().for_each(|v| *v /= n);
        } else {
            out.row_mut(c).copy_from_slice(centers.row(c));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, GradCheck, Parameters};
    use crate::SeededRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    pub(crate) fn random_unit_rows(rows: usize, dim: usize, rng: &mut SeededRng) -> Tensor {
        let mut t = Tensor::zeros(&[rows, dim]);
        for i in 0..rows {
            let r = t.row_mut(i);
            for v in r.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let n = l2_norm(r);
            r.iter_mut().for_each(|v| *v /= n);
        }
        t
    }

    /// Straight transcription of the summation, no shared helpers.
    fn loop_loss(f: &Tensor) -> f64 {
        let n = f.rows() / 2;
        let mut acc = 0.0;
        for i in 0..n {
            let a = f.row(2 * i);
            let cos = |j: usize| a.iter().zip(f.row(j)).map(|(x, y)| x * y).sum::<f64>();
            let pos = cos(2 * i + 1).exp();
            let mut neg = 0.0;
            for j in 0..2 * n {
                if j != 2 * i && j != 2 * i + 1 {
                    neg += cos(j).exp();
                }
            }
            acc += (pos / (neg + pos)).ln();
        }
        -acc / n as f64
    }

    #[test]
    fn single_pair_loss_is_exactly_zero() {
        let mut rng = SeededRng::seed_from_u64(0);
        for _ in 0..20 {
            let f = random_unit_rows(2, 8, &mut rng);
            assert_eq!(contrastive_loss(&f).unwrap(), 0.0);
        }
    }

    #[test]
    fn identical_features_give_log_of_candidates() {
        for n in 1..6 {
            let mut row = vec![0.0; 4];
            row[1] = 1.0;
            let f = Tensor::from_rows(&vec![row; 2 * n]).unwrap();
            let want = ((2 * n - 1) as f64).ln();
            assert!((contrastive_loss(&f).unwrap() - want).abs() < 1e-9);
        }
        let f = Tensor::from_rows(&vec![vec![0.6, 0.8]; 4]).unwrap();
        assert!((contrastive_loss(&f).unwrap() - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = SeededRng::seed_from_u64(12);
        for _ in 0..50 {
            let f = random_unit_rows(8, 16, &mut rng);
            let got = contrastive_loss(&f).unwrap();
            let want = loop_loss(&f);
            assert!(((got - want) / want.abs().max(1e-300)).abs() < 1e-10, "{got} {want}");
        }
    }

    #[test]
    fn rejects_non_unit_or_odd_batches() {
        let f = Tensor::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(contrastive_loss(&f).is_err());
        let f = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(contrastive_loss(&f).is_err());
    }

    #[derive(Clone)]
    struct Raw(Tensor);
    impl Parameters for Raw {
        fn named_tensors(&self) -> Vec<(String, &Tensor)> {
            vec![("f".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn feature_gradient_matches_finite_differences() {
        // the loss is defined on the sphere, so differentiate the unconstrained
        // expression through the loop oracle rather than the checked entry point
        let mut rng = SeededRng::seed_from_u64(5);
        let f = random_unit_rows(8, 5, &mut rng);
        let centers = random_unit_rows(3, 5, &mut rng);
        let labels = assign(&f, &centers).unwrap();
        let lambda = 0.3;
        let (_, g) = cluster_loss_grad(&f, &centers, &labels, lambda).unwrap();
        let oracle = |p: &Raw| {
            let mut pull = 0.0;
            for (i, &k) in labels.iter().enumerate() {
                pull += squared_distance(p.0.row(i), centers.row(k));
            }
            loop_loss(&p.0) + lambda / 2.0 * pull / 8.0
        };
        let err = grad_check(oracle, &Raw(f), &Raw(g), &GradCheck::default());
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn nearest_center_assignment() {
        let centers = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let f = Tensor::from_rows(&[vec![0.6, 0.8]]).unwrap();
        assert_eq!(assign(&f, &centers).unwrap(), vec![1]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let tie = Tensor::from_rows(&[vec![h, h]]).unwrap();
        assert_eq!(assign(&tie, &centers).unwrap(), vec![0]);
        let exact = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(assign(&exact, &centers).unwrap(), vec![1]);
        let masked = assign_among(&tie, &centers, Some(&[false, true])).unwrap();
        assert_eq!(masked, vec![1]);
        assert!(assign_among(&tie, &centers, Some(&[false, false])).is_err());
    }

    #[test]
    fn pull_term_arithmetic() {
        let centers = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let f = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        // no pull when every feature sits on its center
        let at = cluster_loss(&f, &centers, &[0, 0], 0.01).unwrap();
        assert_eq!(at, contrastive_loss(&f).unwrap());
        // second feature at distance 1 from its (deliberately chosen) center:
        // 0.01/2 * mean([0, 1]) = 0.0025 on top of the zero single-pair contrastive loss
        let centers = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let l = cluster_loss(&f, &centers, &[0, 1], 0.01).unwrap();
        assert!((l - 0.0025).abs() < 1e-15);
        let l0 = cluster_loss(&f, &centers, &[0, 1], 0.0).unwrap();
        assert_eq!(l0, contrastive_loss(&f).unwrap());
    }

    #[test]
    fn center_update_rules() {
        let centers = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let f = Tensor::from_rows(&[vec![0.6, 0.8], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let labels = [0, 1, 1];
        let raw = blend_centers(&centers, &f, &labels);
        // one member replaces the center
        assert_eq!(raw.row(0), &[0.6, 0.8]);
        // β = 1/2 over mean (0.5, 0.5) from a zero center
        assert_eq!(raw.row(1), &[0.25, 0.25]);
        let upd = update_centers(&centers, &f, &labels).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((upd.row(1)[0] - h).abs() < 1e-15 && (upd.row(1)[1] - h).abs() < 1e-15);
        // empty cluster untouched
        assert_eq!(upd.row(2), centers.row(2));
    }

    fn rotation(dim: usize, rng: &mut SeededRng) -> Tensor {
        // Gram-Schmidt on a Gaussian matrix
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            for u in &q {
                let d = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
            let n = l2_norm(&v);
            if n > 1e-6 {
                q.push(v.iter().map(|x| x / n).collect());
            }
        }
        Tensor::from_rows(&q).unwrap()
    }

    fn rotate(t: &Tensor, r: &Tensor) -> Tensor {
        let mut out = t.matmul(r).unwrap();
        for i in 0..out.rows() {
            let n = l2_norm(out.row(i));
            out.row_mut(i).iter_mut().for_each(|v| *v /= n);
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rotation_invariance(seed in any::<u64>()) {
            let mut rng = SeededRng::seed_from_u64(seed);
            let f = random_unit_rows(6, 4, &mut rng);
            let c = random_unit_rows(3, 4, &mut rng);
            let r = rotation(4, &mut rng);
            let (fr, cr) = (rotate(&f, &r), rotate(&c, &r));
            let l = contrastive_loss(&f).unwrap();
            prop_assert!((l - contrastive_loss(&fr).unwrap()).abs() < 1e-10);
            prop_assert_eq!(assign(&f, &c).unwrap(), assign(&fr, &cr).unwrap());
        }

        #[test]
        fn updated_centers_are_unit(seed in any::<u64>()) {
            let mut rng = SeededRng::seed_from_u64(seed);
            let f = random_unit_rows(12, 5, &mut rng);
            let c = random_unit_rows(4, 5, &mut rng);
            let labels = assign(&f, &c).unwrap();
            let u = update_centers(&c, &f, &labels).unwrap();
            for k in 0..4 {
                prop_assert!((l2_norm(u.row(k)) - 1.0).abs() < 1e-12);
            }
        }
    }
}
