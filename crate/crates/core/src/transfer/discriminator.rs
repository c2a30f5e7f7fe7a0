use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::numcore::{sigmoid, softplus, Activation, Checkpoint, Mlp, Parameters, Tensor};
use crate::SeededRng;

/// Fixed per-feature affine map in front of the discriminator network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScale {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScale {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Zero mean, unit variance over the rows of `x`.
    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for i in 0..x.rows() {
            for (j, v) in x.row(i).iter().enumerate() {
                mean[j] += v;
                sq[j] += v * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n - m * m).max(0.0).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let d = self.mean.len();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % d;
            *v = (*v - self.mean[j]) * self.scale[j];
        }
        out
    }
}

/// Scores a state transition `(s, s')`: `D = σ(logit)`, near 0 for
/// transitions that look like demonstrations and near 1 for policy ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
    pub input: InputScale,
}

impl Discriminator {
    /// `transition_dim` is `2 · state_dim`.
    pub fn new(transition_dim: usize, hidden: usize, input: InputScale, rng: &mut SeededRng) -> Self {
        Self {
            net: Mlp::new(
                &[transition_dim, hidden, hidden, 1],
                Activation::Tanh,
                Activation::Identity,
                rng,
            ),
            input,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Logits for rows of `[s, s']`.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        if x.cols() != self.input_dim() {
            return shape_err(format!("transition width {} vs discriminator {}", x.cols(), self.input_dim()));
        }
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        Ok(self.net.forward(&self.input.apply(x))?.into_data())
    }

    pub fn logit(&self, s: &[f64], next: &[f64]) -> f64 {
        let x: Vec<f64> = s
            .iter()
            .chain(next)
            .enumerate()
            .map(|(j, v)| (v - self.input.mean[j]) * self.input.scale[j])
            .collect();
        self.net.forward_one(&x)[0]
    }

    pub fn prob(&self, s: &[f64], next: &[f64]) -> f64 {
        sigmoid(self.logit(s, next))
    }

    pub fn probs(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    /// Adversarial policy reward `-log D(s, s')`.
    pub fn rewards(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(|l| softplus(-l)).collect())
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) -> Result<()> {
        ck.insert_params(prefix, self);
        ck.set_meta(&format!("{prefix}.input"), &self.input)?;
        ck.set_meta(&format!("{prefix}.hidden"), &self.net.layers[0].outputs())
    }

    pub fn read_checkpoint(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let input: InputScale = ck.meta(&format!("{prefix}.input"))?;
        let hidden: usize = ck.meta(&format!("{prefix}.hidden"))?;
        let mut rng = <SeededRng as rand::SeedableRng>::seed_from_u64(0);
        let mut d = Discriminator::new(input.mean.len(), hidden, input, &mut rng);
        ck.load_params(prefix, &mut d)?;
        Ok(d)
    }
}

impl Parameters for Discriminator {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.net.named_tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.tensors_mut()
    }
}

/// `-[mean_demo log(1 - D) + mean_policy log D]`. Demonstrations carry label
/// 0 and policy transitions label 1.
pub fn discriminator_loss(d: &Discriminator, demo: &Tensor, policy: &Tensor) -> Result<f64> {
    Ok(loss_from_logits(&d.logits(demo)?, &d.logits(policy)?))
}

fn loss_from_logits(demo: &[f64], policy: &[f64]) -> f64 {
    // log(1 - σ(l)) = -softplus(l), log σ(l) = -softplus(-l)
    let a = demo.iter().map(|&l| softplus(l)).sum::<f64>() / demo.len() as f64;
    let b = policy.iter().map(|&l| softplus(-l)).sum::<f64>() / policy.len() as f64;
    a + b
}

/// Loss value and parameter gradient.
pub fn discriminator_loss_grad(d: &Discriminator, demo: &Tensor, policy: &Tensor) -> Result<(f64, Discriminator)> {
    if demo.rows() == 0 || policy.rows() == 0 {
        return Err(crate::Error::InvalidInput("discriminator loss needs both transition sets".into()));
    }
    let (nd, np) = (demo.rows(), policy.rows());
    let mut x = d.input.apply(demo).into_data();
    x.extend_from_slice(d.input.apply(policy).data());
    let x = Tensor::matrix(nd + np, d.input_dim(), x)?;
    let cache = d.net.forward_cached(&x)?;
    let logits = cache.output().data();
    let loss = loss_from_logits(&logits[..nd], &logits[nd..]);
    let mut up = Vec::with_capacity(nd + np);
    up.extend(logits[..nd].iter().map(|&l| sigmoid(l) / nd as f64));
    up.extend(logits[nd..].iter().map(|&l| -sigmoid(-l) / np as f64));
    let (g, _) = d.net.backward(&cache, &Tensor::matrix(nd + np, 1, up)?)?;
    Ok((
        loss,
        Discriminator {
            net: g,
            input: d.input.clone(),
        },
    ))
}
