//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::Parameters;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub step: f64,
    /// Above this many parameters only a seeded random subset is probed.
    pub max_probes: usize,
    pub seed: u64,
    /// Denominator floor for the relative error, so entries where both
    /// gradients vanish do not blow up.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_probes: 1000,
            seed: 0,
            floor: 1e-8,
        }
    }
}

/// Worst relative error `|a - n| / max(|a| + |n|, floor)` between `analytic`
/// and central differences of `loss` around `params`.
pub fn grad_check<P, F>(loss: F, params: &P, analytic: &P, opts: &GradCheck) -> f64
where
    P: Parameters,
    F: Fn(&P) -> f64,
{
    let total = params.param_count();
    let analytic = analytic.flat();
    assert_eq!(analytic.len(), total, "gradient shape does not match parameters");
    let probes: Vec<usize> = if total > opts.max_probes {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut idx = sample(&mut rng, total, opts.max_probes).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..total).collect()
    };

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for &flat_idx in &probes {
        let orig = read(&probe, flat_idx);
        write(&mut probe, flat_idx, orig + opts.step);
        let plus = loss(&probe);
        write(&mut probe, flat_idx, orig - opts.step);
        let minus = loss(&probe);
        write(&mut probe, flat_idx, orig);
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[flat_idx];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(opts.floor);
        worst = worst.max(rel);
    }
    worst
}

fn locate<P: Parameters>(p: &P, mut flat_idx: usize) -> (usize, usize) {
    for (ti, t) in p.tensors().iter().enumerate() {
        if flat_idx < t.len() {
            return (ti, flat_idx);
        }
        flat_idx -= t.len();
    }
    panic!("parameter index out of range");
}

fn read<P: Parameters>(p: &P, flat_idx: usize) -> f64 {
    let (ti, i) = locate(p, flat_idx);
    p.tensors()[ti].data()[i]
}

fn write<P: Parameters>(p: &mut P, flat_idx: usize, v: f64) {
    let (ti, i) = locate(p, flat_idx);
    p.tensors_mut()[ti].data_mut()[i] = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::tensor::Tensor;

    #[derive(Clone)]
    struct Vec2(Tensor);

    impl Parameters for Vec2 {
        fn named_tensors(&self) -> Vec<(String, &Tensor)> {
            vec![("v".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn quadratic_is_nearly_exact() {
        let p = Vec2(Tensor::vector(vec![1.5, -0.25, 3.0]));
        let loss = |q: &Vec2| q.0.data().iter().map(|x| 2.0 * x * x + x).sum::<f64>();
        let grad = Vec2(p.0.map(|x| 4.0 * x + 1.0));
        assert!(grad_check(loss, &p, &grad, &GradCheck::default()) < 1e-8);
    }

    #[test]
    fn detects_wrong_gradient() {
        let p = Vec2(Tensor::vector(vec![1.0, 2.0]));
        let loss = |q: &Vec2| q.0.data().iter().map(|x| x * x).sum::<f64>();
        let wrong = Vec2(p.0.map(|x| 3.0 * x));
        assert!(grad_check(loss, &p, &wrong, &GradCheck::default()) > 0.1);
    }

    #[test]
    fn subsamples_large_parameter_sets() {
        let p = Vec2(Tensor::vector((0..5000).map(|i| (i % 7) as f64 * 0.1 + 0.1).collect()));
        let loss = |q: &Vec2| q.0.data().iter().map(|x| x * x).sum::<f64>();
        let grad = Vec2(p.0.map(|x| 2.0 * x));
        let opts = GradCheck {
            max_probes: 50,
            ..GradCheck::default()
        };
        assert!(grad_check(loss, &p, &grad, &opts) < 1e-6);
    }
}
