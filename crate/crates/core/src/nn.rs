//! Minimal dense-network engine.
//!
//! Forward pass, exact backpropagation, and an adaptive-moment optimizer for
//! small fully connected networks. Hidden layers use the rectifier
//! `max(0, z)`; the output head is either linear or a probability simplex
//! (numerically stable softmax). Everything is `f64` and deterministic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

/// Output head applied after the last affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    /// Raw affine output.
    Linear,
    /// Stable softmax; components are non-negative and sum to 1.
    Simplex,
}

/// Dense feed-forward network.
///
/// Weight matrices are row-major with shape `(out_dim, in_dim)`; layer `l`
/// maps `layer_sizes[l]` inputs to `layer_sizes[l + 1]` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    head: OutputHead,
}

/// Per-layer values recorded by [`Mlp::forward`] for exact backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation `z = Wx + b` of each layer.
    pre_acts: Vec<Vec<f64>>,
    /// Final output after the head (probabilities for the simplex head).
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Per-parameter gradients, shape-congruent with the owning [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    /// All-zero gradients matching `mlp`.
    pub fn zeros_like(mlp: &Mlp) -> Self {
        ParamGrads {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Adds `other` into `self`. Shapes must match.
    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Adaptive-moment accumulators mirroring an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m_weights: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<f64>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
    pub step_count: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

impl OptimizerState {
    /// Zeroed accumulators matching `mlp`.
    pub fn zeros_like(mlp: &Mlp) -> Self {
        let zw: Vec<Vec<f64>> = mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let zb: Vec<Vec<f64>> = mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        OptimizerState {
            m_weights: zw.clone(),
            v_weights: zw,
            m_biases: zb.clone(),
            v_biases: zb,
            step_count: 0,
        }
    }
}

impl Mlp {
    /// Builds a network with weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// and zero biases. Deterministic given the rng state.
    pub fn init<R: Rng + ?Sized>(layer_sizes: &[usize], head: OutputHead, rng: &mut R) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }

        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for l in 0..layer_sizes.len() - 1 {
            let fan_in = layer_sizes[l];
            let fan_out = layer_sizes[l + 1];
            let limit = 1.0 / libm::sqrt(fan_in as f64);
            let mut w = vec![0.0; fan_out * fan_in];
            for x in &mut w {
                *x = rng.gen_range(-limit..limit);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }

        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            head,
        })
    }

    /// Rebuilds a network from raw parts, validating shape congruence.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        head: OutputHead,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidConfig("bad layer sizes".into()));
        }
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::InvalidConfig("layer count mismatch".into()));
        }
        for l in 0..n_layers {
            if weights[l].len() != layer_sizes[l] * layer_sizes[l + 1] {
                return Err(Error::ShapeMismatch {
                    expected: layer_sizes[l] * layer_sizes[l + 1],
                    got: weights[l].len(),
                });
            }
            if biases[l].len() != layer_sizes[l + 1] {
                return Err(Error::ShapeMismatch {
                    expected: layer_sizes[l + 1],
                    got: biases[l].len(),
                });
            }
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
            head,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Per-layer row-major weight matrices.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Per-layer bias vectors.
    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn affine(&self, layer: usize, x: &[f64], out: &mut Vec<f64>) {
        let in_dim = self.layer_sizes[layer];
        let out_dim = self.layer_sizes[layer + 1];
        let w = &self.weights[layer];
        let b = &self.biases[layer];
        out.clear();
        out.reserve(out_dim);
        for o in 0..out_dim {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let mut sum = b[o];
            for (wi, xi) in row.iter().zip(x) {
                sum += wi * xi;
            }
            out.push(sum);
        }
    }

    fn apply_head(&self, z: &[f64]) -> Vec<f64> {
        match self.head {
            OutputHead::Linear => z.to_vec(),
            OutputHead::Simplex => {
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut out: Vec<f64> = z.iter().map(|&v| libm::exp(v - max)).collect();
                let sum: f64 = out.iter().sum();
                for p in &mut out {
                    *p /= sum;
                }
                out
            }
        }
    }

    /// Forward pass recording everything needed by [`Mlp::backward`].
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }

        let n = self.n_layers();
        let mut inputs = Vec::with_capacity(n);
        let mut pre_acts = Vec::with_capacity(n);
        let mut cur = x.to_vec();
        for l in 0..n {
            let mut z = Vec::new();
            self.affine(l, &cur, &mut z);
            inputs.push(cur);
            if l + 1 < n {
                cur = z.iter().map(|&v| v.max(0.0)).collect();
            } else {
                cur = self.apply_head(&z);
            }
            pre_acts.push(z);
        }

        let cache = ForwardCache {
            inputs,
            pre_acts,
            output: cur.clone(),
        };
        Ok((cur, cache))
    }

    /// Forward pass without building a cache.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let n = self.n_layers();
        let mut cur = x.to_vec();
        let mut z = Vec::new();
        for l in 0..n {
            self.affine(l, &cur, &mut z);
            if l + 1 < n {
                cur.clear();
                cur.extend(z.iter().map(|&v| v.max(0.0)));
            } else {
                cur = self.apply_head(&z);
            }
        }
        Ok(cur)
    }

    /// Exact gradients of the scalar loss whose gradient at the output is
    /// `output_grad`, given the cache of a matching [`Mlp::forward`] call.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<ParamGrads> {
        let n = self.n_layers();
        if output_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        if cache.inputs.len() != n
            || cache.pre_acts.len() != n
            || cache.output.len() != self.output_dim()
            || (0..n).any(|l| {
                cache.inputs[l].len() != self.layer_sizes[l]
                    || cache.pre_acts[l].len() != self.layer_sizes[l + 1]
            })
        {
            return Err(Error::InvalidConfig("cache does not match network".into()));
        }

        let mut grads = ParamGrads::zeros_like(self);

        // Gradient w.r.t. the last pre-activation.
        let mut dz: Vec<f64> = match self.head {
            OutputHead::Linear => output_grad.to_vec(),
            OutputHead::Simplex => {
                let p = &cache.output;
                let dot: f64 = output_grad.iter().zip(p).map(|(g, pi)| g * pi).sum();
                p.iter()
                    .zip(output_grad)
                    .map(|(pi, g)| pi * (g - dot))
                    .collect()
            }
        };

        for l in (0..n).rev() {
            let in_dim = self.layer_sizes[l];
            let input = &cache.inputs[l];
            let dw = &mut grads.weights[l];
            for (o, &dzo) in dz.iter().enumerate() {
                grads.biases[l][o] = dzo;
                let row = &mut dw[o * in_dim..(o + 1) * in_dim];
                for (g, &xi) in row.iter_mut().zip(input) {
                    *g = dzo * xi;
                }
            }
            if l > 0 {
                // dL/d(input of layer l), gated by the rectifier of layer l-1.
                let w = &self.weights[l];
                let mut dx = vec![0.0; in_dim];
                for (o, &dzo) in dz.iter().enumerate() {
                    let row = &w[o * in_dim..(o + 1) * in_dim];
                    for (d, &wi) in dx.iter_mut().zip(row) {
                        *d += wi * dzo;
                    }
                }
                let z_prev = &cache.pre_acts[l - 1];
                dz = dx
                    .iter()
                    .zip(z_prev)
                    .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                    .collect();
            }
        }

        Ok(grads)
    }

    /// One adaptive-moment update with decay rates 0.9/0.999 and epsilon 1e-8.
    ///
    /// Non-finite gradients reject the step and flag divergence.
    pub fn optimizer_step(
        &mut self,
        grads: &ParamGrads,
        opt: &mut OptimizerState,
        lr: f64,
    ) -> Result<()> {
        if lr <= 0.0 || !lr.is_finite() {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if grads.weights.len() != self.weights.len()
            || grads.biases.len() != self.biases.len()
            || grads
                .weights
                .iter()
                .zip(&self.weights)
                .any(|(g, w)| g.len() != w.len())
            || grads
                .biases
                .iter()
                .zip(&self.biases)
                .any(|(g, b)| g.len() != b.len())
        {
            return Err(Error::InvalidConfig("gradient shape mismatch".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }

        opt.step_count += 1;
        let t = opt.step_count as i32;
        let bc1 = 1.0 - libm::pow(BETA1, t as f64);
        let bc2 = 1.0 - libm::pow(BETA2, t as f64);

        for l in 0..self.weights.len() {
            adam_update(
                &mut self.weights[l],
                &grads.weights[l],
                &mut opt.m_weights[l],
                &mut opt.v_weights[l],
                lr,
                bc1,
                bc2,
            );
            adam_update(
                &mut self.biases[l],
                &grads.biases[l],
                &mut opt.m_biases[l],
                &mut opt.v_biases[l],
                lr,
                bc1,
                bc2,
            );
        }
        Ok(())
    }
}

fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + EPSILON);
    }
}
