use rand::Rng;

use super::params::Parameters;
use super::kernels;
use super::tensor::{gemm, l2_norm, Tensor};
use crate::error::{shape_err, Error, Result};

/// Single-layer LSTM sequence encoder.
///
/// Gate blocks are laid out `[input | forget | cell | output]` along the
/// `4H` axis. The encoding of a sequence is the final hidden state scaled to
/// unit L2 norm; the initial hidden and cell states are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

/// Forward activations of a batch of equal-length sequences.
#[derive(Clone, Debug)]
pub struct LstmCache {
    batch: usize,
    inputs: Vec<Tensor>,
    /// Post-activation gates per step, `[B × 4H]`.
    gates: Vec<Tensor>,
    /// `cells[t]` is the cell state before step `t`; one extra trailing entry.
    cells: Vec<Tensor>,
    /// `hiddens[t]` is the hidden state before step `t`; one extra trailing entry.
    hiddens: Vec<Tensor>,
    /// `tanh` of the cell state after each step.
    cell_tanh: Vec<Tensor>,
    norms: Vec<f64>,
    output: Tensor,
}

impl LstmCache {
    /// Unit-norm encodings, one row per sequence.
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn into_output(self) -> Tensor {
        self.output
    }
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        // forget-gate bias starts at 1 so early gradients flow through time
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        Self {
            w_input: Tensor::glorot(input_dim, 4 * hidden, rng),
            w_hidden: Tensor::glorot(hidden, 4 * hidden, rng),
            bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.rows()
    }

    /// Encodes one `[T × input_dim]` sequence.
    pub fn encode(&self, sequence: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&[sequence])?.output.into_data())
    }

    pub fn forward_batch(&self, sequences: &[&Tensor]) -> Result<LstmCache> {
        let batch = sequences.len();
        if batch == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let steps = sequences[0].rows();
        if steps == 0 {
            return Err(Error::InvalidInput("empty sequence".into()));
        }
        let d = self.input_dim();
        for (i, s) in sequences.iter().enumerate() {
            if s.cols() != d {
                return shape_err(format!("sequence {i} has state dim {}, expected {d}", s.cols()));
            }
            if s.rows() != steps {
                return shape_err(format!("sequence {i} has {} steps, expected {steps}", s.rows()));
            }
        }
        let h = self.hidden();
        let g4 = 4 * h;

        let inputs: Vec<Tensor> = (0..steps)
            .map(|t| {
                let mut x = Vec::with_capacity(batch * d);
                for s in sequences {
                    x.extend_from_slice(s.row(t));
                }
                Tensor::matrix(batch, d, x).expect("sized above")
            })
            .collect();

        let mut gates = Vec::with_capacity(steps);
        let mut cells = Vec::with_capacity(steps + 1);
        let mut hiddens = Vec::with_capacity(steps + 1);
        let mut cell_tanh = Vec::with_capacity(steps);
        cells.push(Tensor::zeros(&[batch, h]));
        hiddens.push(Tensor::zeros(&[batch, h]));

        for x in &inputs {
            let h_prev = hiddens.last().unwrap();
            let c_prev = cells.last().unwrap();
            let mut z = Tensor::zeros(&[batch, g4]);
            gemm(false, false, batch, d, g4, x.data(), self.w_input.data(), 0.0, z.data_mut());
            gemm(false, false, batch, h, g4, h_prev.data(), self.w_hidden.data(), 1.0, z.data_mut());
            z.add_row(self.bias.data());

            let mut c_next = Tensor::zeros(&[batch, h]);
            let mut tc_next = Tensor::zeros(&[batch, h]);
            let mut h_next = Tensor::zeros(&[batch, h]);
            for b in 0..batch {
                let zr = z.row_mut(b);
                kernels::sigmoid_in_place(&mut zr[..2 * h]);
                kernels::tanh_in_place(&mut zr[2 * h..3 * h]);
                kernels::sigmoid_in_place(&mut zr[3 * h..]);
                let zr = z.row(b);
                let cp = c_prev.row(b);
                let cn = c_next.row_mut(b);
                for j in 0..h {
                    cn[j] = zr[h + j] * cp[j] + zr[j] * zr[2 * h + j];
                }
                let tc = tc_next.row_mut(b);
                tc.copy_from_slice(c_next.row(b));
                kernels::tanh_in_place(tc);
                let hn = h_next.row_mut(b);
                for j in 0..h {
                    hn[j] = zr[3 * h + j] * tc[j];
                }
            }
            cell_tanh.push(tc_next);
            gates.push(z);
            cells.push(c_next);
            hiddens.push(h_next);
        }

        let last = hiddens.last().unwrap();
        let mut output = Tensor::zeros(&[batch, h]);
        let mut norms = Vec::with_capacity(batch);
        for b in 0..batch {
            let hr = last.row(b);
            let n = l2_norm(hr);
            let out = output.row_mut(b);
            if n > 0.0 {
                for (o, v) in out.iter_mut().zip(hr) {
                    *o = v / n;
                }
            } else {
                // degenerate all-zero state: fall back to the first axis
                out[0] = 1.0;
            }
            norms.push(n);
        }

        Ok(LstmCache {
            batch,
            inputs,
            gates,
            cells,
            hiddens,
            cell_tanh,
            norms,
            output,
        })
    }

    /// Parameter gradients of `sum(d_output ⊙ output)` by backpropagation
    /// through time.
    pub fn backward_batch(&self, cache: &LstmCache, d_output: &Tensor) -> Result<Lstm> {
        let batch = cache.batch;
        let h = self.hidden();
        let d = self.input_dim();
        let g4 = 4 * h;
        if d_output.shape() != [batch, h] {
            return shape_err(format!(
                "output gradient {:?}, expected [{batch}, {h}]",
                d_output.shape()
            ));
        }

        // through the normalization: dh = (dz - z (z·dz)) / |h|
        let mut dh = Tensor::zeros(&[batch, h]);
        for b in 0..batch {
            let n = cache.norms[b];
            if n == 0.0 {
                continue;
            }
            let z = cache.output.row(b);
            let dz = d_output.row(b);
            let proj: f64 = z.iter().zip(dz).map(|(a, c)| a * c).sum();
            for ((o, zv), dzv) in dh.row_mut(b).iter_mut().zip(z).zip(dz) {
                *o = (dzv - zv * proj) / n;
            }
        }

        let mut grads = self.zeros_like();
        let mut dc = Tensor::zeros(&[batch, h]);
        let mut dzs = Tensor::zeros(&[batch, g4]);
        for t in (0..cache.inputs.len()).rev() {
            let gates = &cache.gates[t];
            let c_prev = &cache.cells[t];
            let tanh_c = &cache.cell_tanh[t];
            for b in 0..batch {
                let gr = gates.row(b);
                let cp = c_prev.row(b);
                let tcr = tanh_c.row(b);
                let dhr = dh.row(b);
                let dcr = dc.row_mut(b);
                let dzr = dzs.row_mut(b);
                for j in 0..h {
                    let (i, f, g, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                    let tc = tcr[j];
                    let d_o = dhr[j] * tc;
                    let dct = dcr[j] + dhr[j] * o * (1.0 - tc * tc);
                    dzr[j] = dct * g * i * (1.0 - i);
                    dzr[h + j] = dct * cp[j] * f * (1.0 - f);
                    dzr[2 * h + j] = dct * i * (1.0 - g * g);
                    dzr[3 * h + j] = d_o * o * (1.0 - o);
                    dcr[j] = dct * f;
                }
            }
            let x = &cache.inputs[t];
            let h_prev = &cache.hiddens[t];
            gemm(true, false, d, batch, g4, x.data(), dzs.data(), 1.0, grads.w_input.data_mut());
            gemm(true, false, h, batch, g4, h_prev.data(), dzs.data(), 1.0, grads.w_hidden.data_mut());
            grads.bias.add_scaled(&Tensor::vector(dzs.sum_rows()), 1.0);
            if t > 0 {
                gemm(false, true, batch, g4, h, dzs.data(), self.w_hidden.data(), 0.0, dh.data_mut());
            }
        }
        Ok(grads)
    }
}

impl Parameters for Lstm {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_input".into(), &self.w_input),
            ("w_hidden".into(), &self.w_hidden),
            ("bias".into(), &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}
