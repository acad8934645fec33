use super::config::DitConfig;
use super::rope::RopeTables;
use super::tokens::CaptionEmbedding;
use crate::layers::{join, ones_param, Linear, Module};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const QK_EPS: f64 = 1e-6;

/// `[N, d]` to `[heads, N, head_dim]`, optionally RMS-normalized per head
/// and rotated.
fn split_heads<S: Scalar>(x: &Tensor<S>, heads: usize, scale: Option<&Tensor<S>>, rope: Option<&RopeTables<S>>) -> Tensor<S> {
    let (n, d) = (x.dim(0), x.dim(1));
    let mut h = x.reshape(&[n, heads, d / heads]);
    if let Some(s) = scale {
        h = h.rms_norm(Some(s), QK_EPS);
    }
    if let Some(r) = rope {
        h = h.rotate_pairs(&r.cos, &r.sin);
    }
    h.permute(&[1, 0, 2])
}

fn merge_heads<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (h, n, hd) = (x.dim(0), x.dim(1), x.dim(2));
    x.permute(&[1, 0, 2]).reshape(&[n, h * hd])
}

/// Attention output `[N, d]` together with the weights `[heads, N, M]`.
pub struct Attended<S: Scalar> {
    pub output: Tensor<S>,
    pub weights: Option<Tensor<S>>,
}

#[derive(Clone, Debug)]
pub struct SelfAttention<S: Scalar = f32> {
    pub heads: usize,
    pub q: Linear<S>,
    pub k: Linear<S>,
    pub v: Linear<S>,
    pub o: Linear<S>,
    pub q_scale: Tensor<S>,
    pub k_scale: Tensor<S>,
}

impl<S: Scalar> SelfAttention<S> {
    pub fn new(cfg: &DitConfig, rng: &mut Rng) -> Self {
        let d = cfg.hidden_dim;
        Self {
            heads: cfg.heads,
            q: Linear::new(d, d, rng),
            k: Linear::new(d, d, rng),
            v: Linear::new(d, d, rng),
            o: Linear::new(d, d, rng),
            q_scale: ones_param(&[cfg.head_dim()]),
            k_scale: ones_param(&[cfg.head_dim()]),
        }
    }

    /// QK-normalized, rotary, full self-attention over all tokens of `x: [N, d]`.
    pub fn forward(&self, x: &Tensor<S>, rope: &RopeTables<S>) -> Attended<S> {
        let hd = x.dim(1) / self.heads;
        let q = split_heads(&self.q.forward(x), self.heads, Some(&self.q_scale), Some(rope));
        let k = split_heads(&self.k.forward(x), self.heads, Some(&self.k_scale), Some(rope));
        let v = split_heads(&self.v.forward(x), self.heads, None, None);
        let w = q.matmul_t(&k).scale(1.0 / (hd as f64).sqrt()).softmax();
        Attended {
            output: self.o.forward(&merge_heads(&w.matmul(&v))),
            weights: Some(w),
        }
    }

    /// Pre-softmax logits `[heads, N, N]`, for inspection.
    pub fn logits(&self, x: &Tensor<S>, rope: &RopeTables<S>) -> Tensor<S> {
        let hd = x.dim(1) / self.heads;
        let q = split_heads(&self.q.forward(x), self.heads, Some(&self.q_scale), Some(rope));
        let k = split_heads(&self.k.forward(x), self.heads, Some(&self.k_scale), Some(rope));
        q.matmul_t(&k).scale(1.0 / (hd as f64).sqrt())
    }
}

impl<S: Scalar> Module<S> for SelfAttention<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.o.visit(&join(prefix, "o"), f);
        f(join(prefix, "q_scale"), &mut self.q_scale);
        f(join(prefix, "k_scale"), &mut self.k_scale);
    }
}

/// Queries from the video tokens, keys and values from the caption.
#[derive(Clone, Debug)]
pub struct CrossAttention<S: Scalar = f32> {
    pub heads: usize,
    pub q: Linear<S>,
    pub k: Linear<S>,
    pub v: Linear<S>,
    pub o: Linear<S>,
    pub q_scale: Tensor<S>,
    pub k_scale: Tensor<S>,
}

impl<S: Scalar> CrossAttention<S> {
    pub fn new(cfg: &DitConfig, rng: &mut Rng) -> Self {
        let (d, dt) = (cfg.hidden_dim, cfg.text_dim);
        Self {
            heads: cfg.heads,
            q: Linear::new(d, d, rng),
            k: Linear::new(dt, d, rng),
            v: Linear::new(dt, d, rng),
            o: Linear::zeroed(d, d),
            q_scale: ones_param(&[cfg.head_dim()]),
            k_scale: ones_param(&[cfg.head_dim()]),
        }
    }

    /// Masked positions get `-inf` logits. With nothing unmasked the
    /// context is defined to be zero, so the sublayer contributes nothing.
    pub fn forward(&self, x: &Tensor<S>, caption: &CaptionEmbedding<S>) -> Attended<S> {
        let (n, d) = (x.dim(0), x.dim(1));
        if !caption.mask.iter().any(|&m| m) {
            return Attended {
                output: Tensor::zeros(&[n, d]),
                weights: None,
            };
        }
        let hd = d / self.heads;
        let m = caption.mask.len();
        let q = split_heads(&self.q.forward(x), self.heads, Some(&self.q_scale), None);
        let k = split_heads(&self.k.forward(&caption.tokens), self.heads, Some(&self.k_scale), None);
        let v = split_heads(&self.v.forward(&caption.tokens), self.heads, None, None);
        let bias: Vec<S> = caption
            .mask
            .iter()
            .map(|&keep| if keep { S::zero() } else { S::neg_infinity() })
            .collect();
        let bias = Tensor::new(&[1, 1, m], bias);
        let w = q.matmul_t(&k).scale(1.0 / (hd as f64).sqrt()).add(&bias).softmax();
        Attended {
            output: self.o.forward(&merge_heads(&w.matmul(&v))),
            weights: Some(w),
        }
    }
}

impl<S: Scalar> Module<S> for CrossAttention<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.o.visit(&join(prefix, "o"), f);
        f(join(prefix, "q_scale"), &mut self.q_scale);
        f(join(prefix, "k_scale"), &mut self.k_scale);
    }
}
