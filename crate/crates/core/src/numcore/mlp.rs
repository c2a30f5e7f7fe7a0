use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::tensor::{gemm, sigmoid, Tensor};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Affine layer `y = act(x W + b)` with `W` stored `[in × out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

/// Multi-layer perceptron.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer activations recorded by [`Mlp::forward_cached`].
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// `inputs[i]` feeds layer `i`; the final entry is the network output.
    activations: Vec<Tensor>,
}

impl MlpCache {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    /// Builds a network with layer widths `sizes` (input first). Hidden
    /// layers use `hidden`, the last layer uses `output`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| Dense {
                weight: Tensor::glorot(sizes[i], sizes[i + 1], rng),
                bias: Tensor::zeros(&[sizes[i + 1]]),
                activation: if i + 1 == n { output } else { hidden },
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return shape_err("MLP without layers");
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.len() != l.outputs() {
                return shape_err(format!("layer {i} weight/bias mismatch"));
            }
            if i > 0 && layers[i - 1].outputs() != l.inputs() {
                return shape_err(format!("layer {i} expects {} inputs", l.inputs()));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(input)?.activations.pop().unwrap())
    }

    /// Batched forward pass; rows of `input` are samples.
    pub fn forward_cached(&self, input: &Tensor) -> Result<MlpCache> {
        if input.cols() != self.input_dim() {
            return shape_err(format!(
                "MLP input has {} features, expected {}",
                input.cols(),
                self.input_dim()
            ));
        }
        let batch = input.rows();
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let x = activations.last().unwrap();
            let (k, n) = (layer.inputs(), layer.outputs());
            let mut y = Tensor::zeros(&[batch, n]);
            gemm(false, false, batch, k, n, x.data(), layer.weight.data(), 0.0, y.data_mut());
            y.add_row(layer.bias.data());
            let act = layer.activation;
            y.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            activations.push(y);
        }
        Ok(MlpCache { activations })
    }

    /// Exact gradients of `sum(upstream ⊙ output)` with respect to the
    /// parameters and the input.
    pub fn backward(&self, cache: &MlpCache, upstream: &Tensor) -> Result<(Mlp, Tensor)> {
        let out = cache.output();
        if upstream.shape() != out.shape() {
            return shape_err(format!(
                "upstream gradient {:?} vs output {:?}",
                upstream.shape(),
                out.shape()
            ));
        }
        let batch = out.rows();
        let mut grads = self.zeros_like();
        let mut delta = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.activations[i + 1];
            let act = layer.activation;
            if act != Activation::Identity {
                for (d, &yv) in delta.data_mut().iter_mut().zip(y.data()) {
                    *d *= act.grad_from_output(yv);
                }
            }
            let x = &cache.activations[i];
            let (k, n) = (layer.inputs(), layer.outputs());
            let g = &mut grads.layers[i];
            gemm(true, false, k, batch, n, x.data(), delta.data(), 0.0, g.weight.data_mut());
            g.bias = Tensor::vector(delta.sum_rows());
            let mut dx = Tensor::zeros(&[batch, k]);
            gemm(false, true, batch, n, k, delta.data(), layer.weight.data(), 0.0, dx.data_mut());
            delta = dx;
        }
        Ok((grads, delta))
    }

    /// Single-sample forward pass without allocating a cache.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let n = layer.outputs();
            let mut next = layer.bias.data().to_vec();
            let w = layer.weight.data();
            for (i, &xi) in cur.iter().enumerate() {
                let row = &w[i * n..(i + 1) * n];
                for (o, wv) in next.iter_mut().zip(row) {
                    *o += xi * wv;
                }
            }
            let act = layer.activation;
            next.iter_mut().for_each(|v| *v = act.apply(*v));
            cur = next;
        }
        cur
    }
}

impl Parameters for Mlp {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layers.{i}.weight"), &l.weight),
                    (format!("layers.{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
