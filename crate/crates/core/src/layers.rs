//! Parameterized building blocks and parameter traversal.

use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{self, Tensor};

/// Anything holding named trainable leaves.
///
/// `visit` hands out every parameter with its dotted name, in a fixed order.
/// Checkpoints and optimizer state rely on that order being stable.
pub trait Module<S: Scalar> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>));

    fn named_params(&mut self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t.clone())));
        out
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.numel());
        n
    }

    fn zero_grads(&mut self) {
        self.visit("", &mut |_, t| t.zero_grad());
    }

    /// Replaces every trainable leaf with a constant copy (no gradients flow
    /// into the returned module).
    fn freeze(&mut self) {
        self.visit("", &mut |_, t| *t = t.detach());
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// He-style normal init.
pub(crate) fn init_weight<S: Scalar>(shape: &[usize], fan_in: usize, gain: f64, rng: &mut Rng) -> Tensor<S> {
    let std = gain / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::param(shape, (0..n).map(|_| S::of(rng.normal() * std)).collect())
}

pub(crate) fn zeros_param<S: Scalar>(shape: &[usize]) -> Tensor<S> {
    Tensor::param(shape, vec![S::zero(); shape.iter().product()])
}

pub(crate) fn ones_param<S: Scalar>(shape: &[usize]) -> Tensor<S> {
    Tensor::param(shape, vec![S::one(); shape.iter().product()])
}

#[derive(Clone, Debug)]
pub struct Linear<S: Scalar = f32> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            weight: init_weight(&[input, output], input, 1.0, rng),
            bias: zeros_param(&[output]),
        }
    }

    pub fn zeroed(input: usize, output: usize) -> Self {
        Self {
            weight: zeros_param(&[input, output]),
            bias: zeros_param(&[output]),
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        x.linear(&self.weight, Some(&self.bias))
    }
}

impl<S: Scalar> Module<S> for Linear<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Causal 3D convolution layer over `[T, H, W, C]`.
#[derive(Clone, Debug)]
pub struct CausalConv3d<S: Scalar = f32> {
    pub kernel: Tensor<S>,
    pub bias: Tensor<S>,
    pub stride: (usize, usize, usize),
}

impl<S: Scalar> CausalConv3d<S> {
    pub fn new(k: (usize, usize, usize), cin: usize, cout: usize, stride: (usize, usize, usize), rng: &mut Rng) -> Self {
        let fan_in = k.0 * k.1 * k.2 * cin;
        Self {
            kernel: init_weight(&[k.0, k.1, k.2, cin, cout], fan_in, 1.0, rng),
            bias: zeros_param(&[cout]),
            stride,
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        tensor::causal_conv3d(x, &self.kernel, Some(&self.bias), self.stride)
            .expect("conv layer shapes are fixed at construction")
    }

    pub fn cout(&self) -> usize {
        self.kernel.dim(4)
    }
}

impl<S: Scalar> Module<S> for CausalConv3d<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f(join(prefix, "kernel"), &mut self.kernel);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Clone, Debug)]
pub struct Embedding<S: Scalar = f32> {
    pub table: Tensor<S>,
}

impl<S: Scalar> Embedding<S> {
    pub fn new(vocab: usize, dim: usize, rng: &mut Rng) -> Self {
        Self {
            table: init_weight(&[vocab, dim], 1, 1.0, rng),
        }
    }

    pub fn forward(&self, ids: &[usize]) -> Tensor<S> {
        self.table.index_select(ids)
    }
}

impl<S: Scalar> Module<S> for Embedding<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f(join(prefix, "table"), &mut self.table);
    }
}

/// Sinusoidal features of scalar timesteps: `[n, dim]`, half cosines then half sines.
pub fn timestep_embedding<S: Scalar>(ts: &[f64], dim: usize, time_scale: f64) -> Tensor<S> {
    assert!(dim % 2 == 0);
    let half = dim / 2;
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        let t = t * time_scale;
        let freqs = (0..half).map(|i| (-(10_000f64.ln()) * i as f64 / half as f64).exp());
        let args: Vec<f64> = freqs.map(|f| t * f).collect();
        data.extend(args.iter().map(|a| S::of(a.cos())));
        data.extend(args.iter().map(|a| S::of(a.sin())));
    }
    Tensor::new(&[ts.len(), dim], data)
}
