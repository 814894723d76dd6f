//! Fully-connected denoiser with hand-rolled backpropagation.
//!
//! The network maps (signal, ln sigma) to a correction and returns
//! D(z; sigma) = z + f([z, ln sigma]): the skip connection means an
//! all-zero network is already the identity denoiser. Hidden layers use
//! tanh, the output layer is linear.

use rand::RngCore;
use rand_distr::{Distribution, Uniform};

use crate::error::{DigError, Result};

#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub(crate) w: Vec<f64>, // row-major, out_dim x in_dim
    pub(crate) b: Vec<f64>,
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
}

impl Layer {
    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Per-layer gradient accumulator with the same shapes as the network.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub(crate) layers: Vec<(Vec<f64>, Vec<f64>)>, // (dW, db)
}

impl Gradients {
    pub(crate) fn zeros_like(net: &DenoiserNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub(crate) fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().for_each(|g| *g *= s);
            b.iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Forward activations kept for the backward pass of a single sample.
pub(crate) struct Tape {
    input: Vec<f64>,
    /// Post-activation outputs of every layer, in order.
    activations: Vec<Vec<f64>>,
}

impl Tape {
    /// Raw network output (before the skip connection adds z).
    pub(crate) fn output(&self) -> &[f64] {
        self.activations.last().expect("network has layers")
    }
}

/// Feed-forward denoiser D(z; sigma) with a residual skip connection.
#[derive(Debug, Clone)]
pub struct DenoiserNetwork {
    n: usize,
    widths: Vec<usize>,
    sigma_min: f64,
    sigma_max: f64,
    pub(crate) layers: Vec<Layer>,
}

impl DenoiserNetwork {
    /// Glorot-uniform initialization from the caller's generator.
    pub fn init(
        n: usize,
        widths: &[usize],
        sigma_min: f64,
        sigma_max: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if n == 0 {
            return Err(DigError::InvalidArgument("signal length must be > 0".into()));
        }
        if widths.is_empty() || widths.contains(&0) {
            return Err(DigError::InvalidArgument(
                "need at least one non-empty hidden layer".into(),
            ));
        }
        if !(sigma_min > 0.0) || !(sigma_max > sigma_min) {
            return Err(DigError::InvalidArgument(format!(
                "need 0 < sigma_min < sigma_max, got [{sigma_min}, {sigma_max}]"
            )));
        }
        let mut dims = Vec::with_capacity(widths.len() + 2);
        dims.push(n + 1); // signal plus the scalar ln(sigma) feature
        dims.extend_from_slice(widths);
        dims.push(n);

        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound)
                .map_err(|e| DigError::InvalidArgument(e.to_string()))?;
            layers.push(Layer {
                w: (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect(),
                b: vec![0.0; fan_out],
                in_dim: fan_in,
                out_dim: fan_out,
            });
        }
        Ok(Self {
            n,
            widths: widths.to_vec(),
            sigma_min,
            sigma_max,
            layers,
        })
    }

    pub(crate) fn from_parts(
        n: usize,
        widths: Vec<usize>,
        sigma_min: f64,
        sigma_max: f64,
        layers: Vec<Layer>,
    ) -> Self {
        Self {
            n,
            widths,
            sigma_min,
            sigma_max,
            layers,
        }
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn sigma_range(&self) -> (f64, f64) {
        (self.sigma_min, self.sigma_max)
    }

    /// Denoised signal D(z; sigma) = z + network([z, ln sigma]).
    pub fn forward(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(DigError::DimensionMismatch {
                expected: self.n,
                got: z.len(),
            });
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(DigError::Domain(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        let tape = self.forward_tape(z, sigma);
        Ok(tape.output().iter().zip(z).map(|(&r, &zi)| zi + r).collect())
    }

    pub(crate) fn forward_tape(&self, z: &[f64], sigma: f64) -> Tape {
        let mut input = Vec::with_capacity(self.n + 1);
        input.extend_from_slice(z);
        input.push(sigma.ln());

        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut cur = input.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.apply(&cur, &mut out);
            if li != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(out);
            cur = activations.last().unwrap().clone();
        }
        Tape { input, activations }
    }

    /// Accumulate parameter gradients for one sample into `grads`, given
    /// the loss gradient with respect to the raw network output.
    pub(crate) fn backward(&self, tape: &Tape, dl_dout: &[f64], grads: &mut Gradients) {
        let mut delta = dl_dout.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let below: &[f64] = if li == 0 {
                &tape.input
            } else {
                &tape.activations[li - 1]
            };
            let (dw, db) = &mut grads.layers[li];
            for o in 0..layer.out_dim {
                db[o] += delta[o];
                let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, xi) in row.iter_mut().zip(below) {
                    *g += delta[o] * xi;
                }
            }
            if li > 0 {
                let mut next = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (ni, wi) in next.iter_mut().zip(row) {
                        *ni += delta[o] * wi;
                    }
                }
                // tanh'(s) = 1 - a^2 on the layer below.
                for (ni, a) in next.iter_mut().zip(&tape.activations[li - 1]) {
                    *ni *= 1.0 - a * a;
                }
                delta = next;
            }
        }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Read parameter by flat index (weights then biases, layer by layer).
    pub fn param(&self, idx: usize) -> f64 {
        let mut i = idx;
        for l in &self.layers {
            if i < l.w.len() {
                return l.w[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    /// Write parameter by flat index; mirror of [`param`](Self::param).
    pub fn set_param(&mut self, idx: usize, value: f64) {
        let mut i = idx;
        for l in &mut self.layers {
            if i < l.w.len() {
                l.w[i] = value;
                return;
            }
            i -= l.w.len();
            if i < l.b.len() {
                l.b[i] = value;
                return;
            }
            i -= l.b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub(crate) fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    pub(crate) fn apply_update(&mut self, update: &Gradients) {
        for (layer, (uw, ub)) in self.layers.iter_mut().zip(&update.layers) {
            for (w, u) in layer.w.iter_mut().zip(uw) {
                *w += u;
            }
            for (b, u) in layer.b.iter_mut().zip(ub) {
                *b += u;
            }
        }
    }
}
