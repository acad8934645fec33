use super::attention::{CrossAttention, SelfAttention};
use super::config::DitConfig;
use super::rope::{normalize_coords, RopeTables};
use super::tokens::{CaptionEmbedding, TokenSequence};
use crate::error::{Error, Result};
use crate::layers::{join, timestep_embedding, Embedding, Linear, Module};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const NORM_EPS: f64 = 1e-6;
pub const TIME_SCALE: f64 = 1000.0;

/// Per-token `(shift, scale, gate)` pairs for the attention and FFN
/// sublayers. Each tensor is `[N, d]`, or `[1, d]` in the global form.
#[derive(Clone, Debug)]
pub struct Modulation<S: Scalar = f32> {
    pub shift1: Tensor<S>,
    pub scale1: Tensor<S>,
    pub gate1: Tensor<S>,
    pub shift2: Tensor<S>,
    pub scale2: Tensor<S>,
    pub gate2: Tensor<S>,
}

/// Deduplicated timestep conditioning: `silu(temb)` for each distinct
/// timestep plus, per token, which row it uses. Tokens sharing a timestep
/// share bit-identical modulation.
#[derive(Clone, Debug)]
pub struct TimeConditioning<S: Scalar = f32> {
    pub rows: Tensor<S>,
    pub index: Option<Vec<usize>>,
}

fn modulate<S: Scalar>(x: &Tensor<S>, shift: &Tensor<S>, scale: &Tensor<S>) -> Tensor<S> {
    x.rms_norm(None, NORM_EPS).mul(&scale.add_scalar(1.0)).add(shift)
}

#[derive(Clone, Debug)]
pub struct DitBlock<S: Scalar = f32> {
    pub ada: Linear<S>,
    pub attn: SelfAttention<S>,
    pub cross: CrossAttention<S>,
    pub ffn_in: Linear<S>,
    pub ffn_out: Linear<S>,
}

impl<S: Scalar> DitBlock<S> {
    pub fn new(cfg: &DitConfig, rng: &mut Rng) -> Self {
        let d = cfg.hidden_dim;
        Self {
            ada: Linear::zeroed(d, 6 * d),
            attn: SelfAttention::new(cfg, rng),
            cross: CrossAttention::new(cfg, rng),
            ffn_in: Linear::new(d, cfg.ffn_factor * d, rng),
            ffn_out: Linear::new(cfg.ffn_factor * d, d, rng),
        }
    }

    pub fn modulation(&self, time: &TimeConditioning<S>) -> Modulation<S> {
        let raw = self.ada.forward(&time.rows);
        let raw = match &time.index {
            Some(idx) => raw.index_select(idx),
            None => raw,
        };
        let d = raw.dim(1) / 6;
        let part = |i: usize| raw.narrow(1, i * d, d);
        Modulation {
            shift1: part(0),
            scale1: part(1),
            gate1: part(2),
            shift2: part(3),
            scale2: part(4),
            gate2: part(5),
        }
    }

    pub fn forward(&self, x: &Tensor<S>, m: &Modulation<S>, rope: &RopeTables<S>, caption: &CaptionEmbedding<S>) -> Tensor<S> {
        let h = modulate(x, &m.shift1, &m.scale1);
        let x = x.add(&m.gate1.mul(&self.attn.forward(&h, rope).output));
        let x = x.add(&self.cross.forward(&x.rms_norm(None, NORM_EPS), caption).output);
        let h = modulate(&x, &m.shift2, &m.scale2);
        let f = self.ffn_out.forward(&self.ffn_in.forward(&h).gelu());
        x.add(&m.gate2.mul(&f))
    }
}

impl<S: Scalar> Module<S> for DitBlock<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.ada.visit(&join(prefix, "ada"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.cross.visit(&join(prefix, "cross"), f);
        self.ffn_in.visit(&join(prefix, "ffn_in"), f);
        self.ffn_out.visit(&join(prefix, "ffn_out"), f);
    }
}

/// Denoising transformer predicting velocity per latent token.
#[derive(Clone, Debug)]
pub struct Dit<S: Scalar = f32> {
    pub cfg: DitConfig,
    pub proj_in: Linear<S>,
    pub caption_table: Embedding<S>,
    pub time_in: Linear<S>,
    pub time_out: Linear<S>,
    pub blocks: Vec<DitBlock<S>>,
    pub final_ada: Linear<S>,
    pub proj_out: Linear<S>,
}

impl<S: Scalar> Dit<S> {
    pub fn new(cfg: DitConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.hidden_dim;
        Ok(Self {
            proj_in: Linear::new(cfg.latent_channels, d, rng),
            caption_table: Embedding::new(cfg.vocab_size, cfg.text_dim, rng),
            time_in: Linear::new(cfg.time_embed_dim, d, rng),
            time_out: Linear::new(d, d, rng),
            blocks: (0..cfg.blocks).map(|_| DitBlock::new(&cfg, rng)).collect(),
            final_ada: Linear::zeroed(d, 2 * d),
            proj_out: Linear::zeroed(d, cfg.latent_channels),
            cfg,
        })
    }

    /// Caption features for word ids; `mask[i] == false` marks padding.
    pub fn embed_caption(&self, ids: &[usize], mask: &[bool]) -> Result<CaptionEmbedding<S>> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.cfg.vocab_size) {
            return Err(Error::Domain(format!("caption id {bad} outside vocabulary of {}", self.cfg.vocab_size)));
        }
        CaptionEmbedding::new(self.caption_table.forward(ids), mask.to_vec())
    }

    /// Timestep features, one row per distinct value.
    pub fn time_conditioning(&self, per_token_t: &[f64]) -> TimeConditioning<S> {
        let mut uniq: Vec<f64> = Vec::new();
        let mut index = Vec::with_capacity(per_token_t.len());
        for &t in per_token_t {
            let pos = match uniq.iter().position(|u| u.to_bits() == t.to_bits()) {
                Some(p) => p,
                None => {
                    uniq.push(t);
                    uniq.len() - 1
                }
            };
            index.push(pos);
        }
        TimeConditioning {
            rows: self.embed_times(&uniq),
            index: Some(index),
        }
    }

    /// One shared timestep, broadcast over all tokens.
    pub fn global_time_conditioning(&self, t: f64) -> TimeConditioning<S> {
        TimeConditioning {
            rows: self.embed_times(&[t]),
            index: None,
        }
    }

    fn embed_times(&self, ts: &[f64]) -> Tensor<S> {
        let e = timestep_embedding::<S>(ts, self.cfg.time_embed_dim, TIME_SCALE);
        self.time_out.forward(&self.time_in.forward(&e).silu()).silu()
    }

    pub fn forward(&self, seq: &TokenSequence<S>, caption: &CaptionEmbedding<S>) -> Result<Tensor<S>> {
        let time = self.time_conditioning(&seq.timesteps);
        self.forward_with_time(seq, caption, &time)
    }

    pub fn forward_with_time(
        &self,
        seq: &TokenSequence<S>,
        caption: &CaptionEmbedding<S>,
        time: &TimeConditioning<S>,
    ) -> Result<Tensor<S>> {
        if seq.channels() != self.cfg.latent_channels {
            return Err(Error::dim(format!(
                "tokens have {} channels, model expects {}",
                seq.channels(),
                self.cfg.latent_channels
            )));
        }
        if caption.tokens.dim(1) != self.cfg.text_dim {
            return Err(Error::dim(format!("caption width {} != {}", caption.tokens.dim(1), self.cfg.text_dim)));
        }
        let rope = RopeTables::new(&normalize_coords(&seq.coords, &self.cfg), &self.cfg)?;
        let mut x = self.proj_in.forward(&seq.tokens);
        for block in &self.blocks {
            x = block.forward(&x, &block.modulation(time), &rope, caption);
        }
        let fin = self.final_ada.forward(&time.rows);
        let fin = match &time.index {
            Some(idx) => fin.index_select(idx),
            None => fin,
        };
        let d = self.cfg.hidden_dim;
        let h = modulate(&x, &fin.narrow(1, 0, d), &fin.narrow(1, d, d));
        Ok(self.proj_out.forward(&h))
    }
}

impl<S: Scalar> Module<S> for Dit<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.proj_in.visit(&join(prefix, "proj_in"), f);
        self.caption_table.visit(&join(prefix, "caption"), f);
        self.time_in.visit(&join(prefix, "time_in"), f);
        self.time_out.visit(&join(prefix, "time_out"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
        self.final_ada.visit(&join(prefix, "final_ada"), f);
        self.proj_out.visit(&join(prefix, "proj_out"), f);
    }
}

/// Velocity prediction `[N, latent_channels]` for a token sequence.
pub fn dit_forward<S: Scalar>(seq: &TokenSequence<S>, caption: &CaptionEmbedding<S>, model: &Dit<S>) -> Result<Tensor<S>> {
    model.forward(seq, caption)
}

/// Modulation of block `block_idx` for per-token timesteps.
pub fn adaln_modulate<S: Scalar>(block_idx: usize, per_token_t: &[f64], model: &Dit<S>) -> Result<Modulation<S>> {
    let block = model
        .blocks
        .get(block_idx)
        .ok_or_else(|| Error::dim(format!("block {block_idx} of {}", model.blocks.len())))?;
    if let Some(t) = per_token_t.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain(format!("timestep {t} outside [0, 1]")));
    }
    Ok(block.modulation(&model.time_conditioning(per_token_t)))
}
