use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new<P: Parameters>(params: &P, config: AdamConfig) -> Self {
        let first: Vec<Tensor> = params.tensors().iter().map(|t| t.zeros_like()).collect();
        Self {
            config,
            second: first.clone(),
            first,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. A non-finite gradient leaves both the parameters
    /// and the optimizer state untouched.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let grads = grads.tensors();
        let mut targets = params.tensors_mut();
        if grads.len() != targets.len() || targets.len() != self.first.len() {
            return shape_err("optimizer state does not match parameters");
        }
        for ((p, g), m) in targets.iter().zip(&grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return shape_err(format!(
                    "parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                ));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in targets
            .iter_mut()
            .zip(&grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Scalar(Tensor);

    impl Parameters for Scalar {
        fn named_tensors(&self) -> Vec<(String, &Tensor)> {
            vec![("x".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_is_signed_lr() {
        let mut p = Scalar(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let g = Scalar(Tensor::vector(vec![3.0, -0.2, 1e-3]));
        let mut opt = Adam::new(&p, AdamConfig::with_lr(0.01));
        opt.step(&mut p, &g).unwrap();
        let want = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in p.0.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_gradient_still_counts_step() {
        let mut p = Scalar(Tensor::vector(vec![0.3, 0.4]));
        let before = p.0.clone();
        let mut opt = Adam::new(&p, AdamConfig::default());
        let zero = p.zeros_like();
        opt.step(&mut p, &zero).unwrap();
        assert_eq!(p.0, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn quadratic_descends_each_step() {
        // f(x) = x^2, grad 2x, hand-rolled: every step moves x toward 0.
        let mut p = Scalar(Tensor::vector(vec![1.0]));
        let mut opt = Adam::new(&p, AdamConfig::with_lr(0.1));
        let mut prev = 1.0;
        for _ in 0..3 {
            let g = Scalar(Tensor::vector(vec![2.0 * p.0.data()[0]]));
            opt.step(&mut p, &g).unwrap();
            let x = p.0.data()[0];
            assert!(x < prev);
            prev = x;
        }
        // Each early step is ~lr because m̂/sqrt(v̂) ≈ 1 while the gradient sign is constant.
        assert!((prev - 0.7).abs() < 0.01, "{prev}");
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut p = Scalar(Tensor::vector(vec![1.0]));
        let mut g = p.zeros_like();
        g.0.data_mut()[0] = f64::NAN;
        let mut opt = Adam::new(&p, AdamConfig::default());
        assert!(opt.step(&mut p, &g).is_err());
        assert_eq!(p.0.data()[0], 1.0);
        assert_eq!(opt.steps(), 0);
    }
}
