use super::config::VaeConfig;
use super::video::{depth_to_space, patchify, unpatchify, LatentTensor, VideoTensor};
use crate::error::{Error, Result};
use crate::layers::{join, timestep_embedding, zeros_param, CausalConv3d, Linear, Module};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LOGVAR_MIN: f64 = -30.0;
pub const LOGVAR_MAX: f64 = 20.0;
/// Largest decoder timestep the denoising decoder is trained on.
pub const DECODER_MAX_T: f64 = 0.2;
const TIME_SCALE: f64 = 1000.0;
const NORM_EPS: f64 = 1e-6;

/// Gaussian posterior with a single log-variance per position shared by all channels.
#[derive(Clone, Debug)]
pub struct LatentPosterior<S: Scalar = f32> {
    /// `[T', H', W', C]`
    pub mean: Tensor<S>,
    /// `[T', H', W', 1]`
    pub logvar: Tensor<S>,
    pub fps: f64,
}

impl<S: Scalar> LatentPosterior<S> {
    pub fn new(mean: Tensor<S>, logvar: Tensor<S>, fps: f64) -> Result<Self> {
        if mean.rank() != 4 || logvar.rank() != 4 || logvar.dim(3) != 1 || mean.shape()[..3] != logvar.shape()[..3] {
            return Err(Error::dim(format!(
                "posterior mean {:?} / logvar {:?} (channel extent must be 1)",
                mean.shape(),
                logvar.shape()
            )));
        }
        Ok(Self { mean, logvar, fps })
    }

    pub fn clamped_logvar(&self) -> Tensor<S> {
        self.logvar.clamp(LOGVAR_MIN, LOGVAR_MAX)
    }

    /// Reparameterized draw `mean + exp(logvar / 2) * n`.
    pub fn sample(&self, rng: &mut Rng) -> LatentTensor<S> {
        let std = self.clamped_logvar().scale(0.5).exp();
        let noise = Tensor::randn(self.mean.shape(), rng);
        LatentTensor::new(self.mean.add(&std.mul(&noise)), self.fps)
    }

    pub fn mode(&self) -> LatentTensor<S> {
        LatentTensor::new(self.mean.clone(), self.fps)
    }
}

/// `x + conv(silu(groupnorm(x)))`
#[derive(Clone, Debug)]
struct ResBlock<S: Scalar> {
    conv: CausalConv3d<S>,
    groups: usize,
}

impl<S: Scalar> ResBlock<S> {
    fn new(c: usize, groups: usize, rng: &mut Rng) -> Self {
        let mut conv = CausalConv3d::new((3, 3, 3), c, c, (1, 1, 1), rng);
        conv.kernel = conv.kernel.scale(0.5).detach_param();
        Self { conv, groups }
    }

    fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        x.add(&self.conv.forward(&x.group_norm(self.groups, NORM_EPS).silu()))
    }
}

impl<S: Scalar> Module<S> for ResBlock<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.conv.visit(&join(prefix, "conv"), f);
    }
}

/// Causal encoder: patchify, causal conv stages, Gaussian head.
#[derive(Clone, Debug)]
pub struct Encoder<S: Scalar = f32> {
    conv_in: CausalConv3d<S>,
    blocks: Vec<ResBlock<S>>,
    downs: Vec<CausalConv3d<S>>,
    mid: ResBlock<S>,
    conv_out: CausalConv3d<S>,
    groups: usize,
    latent_channels: usize,
    patch: (usize, usize),
}

impl<S: Scalar> Encoder<S> {
    pub fn new(cfg: &VaeConfig, rng: &mut Rng) -> Self {
        let ch = &cfg.enc_channels;
        let stages = cfg.stages();
        let conv_in = CausalConv3d::new((3, 3, 3), cfg.patch_channels(), ch[0], (1, 1, 1), rng);
        let mut blocks = Vec::new();
        let mut downs = Vec::new();
        for i in 0..stages {
            blocks.push(ResBlock::new(ch[i], cfg.norm_groups, rng));
            let (st, ss) = cfg.stage_stride(i);
            downs.push(CausalConv3d::new((3, 3, 3), ch[i], ch[i + 1], (st, ss, ss), rng));
        }
        let last = ch[stages];
        Self {
            conv_in,
            blocks,
            downs,
            mid: ResBlock::new(last, cfg.norm_groups, rng),
            conv_out: CausalConv3d::new((3, 3, 3), last, cfg.latent_channels + 1, (1, 1, 1), rng),
            groups: cfg.norm_groups,
            latent_channels: cfg.latent_channels,
            patch: (cfg.patch_spatial, cfg.patch_temporal),
        }
    }

    /// `(mean, logvar)` for pixels `[T, H, W, 3]`.
    pub fn forward(&self, pixels: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let mut h = self.conv_in.forward(&patchify(pixels, self.patch.0, self.patch.1)?);
        for (block, down) in self.blocks.iter().zip(&self.downs) {
            h = down.forward(&block.forward(&h));
        }
        let h = self.mid.forward(&h);
        let out = self.conv_out.forward(&h.group_norm(self.groups, NORM_EPS).silu());
        let c = self.latent_channels;
        Ok((out.narrow(3, 0, c), out.narrow(3, c, 1)))
    }
}

impl<S: Scalar> Module<S> for Encoder<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.conv_in.visit(&join(prefix, "conv_in"), f);
        for (i, (b, d)) in self.blocks.iter_mut().zip(&mut self.downs).enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
            d.visit(&join(prefix, &format!("down{i}")), f);
        }
        self.mid.visit(&join(prefix, "mid"), f);
        self.conv_out.visit(&join(prefix, "conv_out"), f);
    }
}

/// Group norm whose per-channel scale and shift come from the timestep embedding.
#[derive(Clone, Debug)]
struct AdaGroupNorm<S: Scalar> {
    proj: Linear<S>,
    channels: usize,
    groups: usize,
}

impl<S: Scalar> AdaGroupNorm<S> {
    fn new(temb: usize, channels: usize, groups: usize, rng: &mut Rng) -> Self {
        let mut proj = Linear::new(temb, 2 * channels, rng);
        proj.weight = proj.weight.scale(0.1).detach_param();
        Self { proj, channels, groups }
    }

    /// `temb` is `[1, temb_dim]` (already passed through SiLU).
    fn forward(&self, x: &Tensor<S>, temb: &Tensor<S>) -> Tensor<S> {
        let c = self.channels;
        let m = self.proj.forward(temb);
        let scale = m.narrow(1, 0, c).reshape(&[c]).add_scalar(1.0);
        let shift = m.narrow(1, c, c).reshape(&[c]);
        x.group_norm(self.groups, NORM_EPS).mul(&scale).add(&shift)
    }
}

impl<S: Scalar> Module<S> for AdaGroupNorm<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.proj.visit(&join(prefix, "proj"), f);
    }
}

#[derive(Clone, Debug)]
struct DecoderLevel<S: Scalar> {
    norm: AdaGroupNorm<S>,
    conv: CausalConv3d<S>,
    /// Learned per-channel injection strength, zero at init.
    noise_scale: Option<Tensor<S>>,
    up: Option<(CausalConv3d<S>, usize, usize)>,
}

/// Timestep-conditioned denoising decoder with multi-layer noise injection.
#[derive(Clone, Debug)]
pub struct Decoder<S: Scalar = f32> {
    time_in: Linear<S>,
    time_out: Linear<S>,
    conv_in: CausalConv3d<S>,
    levels: Vec<DecoderLevel<S>>,
    norm_out: AdaGroupNorm<S>,
    conv_out: CausalConv3d<S>,
    time_dim: usize,
    patch: (usize, usize),
}

impl<S: Scalar> Decoder<S> {
    pub fn new(cfg: &VaeConfig, rng: &mut Rng) -> Self {
        let ch = &cfg.dec_channels;
        let stages = cfg.stages();
        let td = cfg.time_embed_dim;
        let time_in = Linear::new(td, td, rng);
        let time_out = Linear::new(td, td, rng);
        let conv_in = CausalConv3d::new((3, 3, 3), cfg.latent_channels, ch[0], (1, 1, 1), rng);
        let mut levels = Vec::new();
        for (i, &c) in ch.iter().enumerate() {
            let norm = AdaGroupNorm::new(td, c, cfg.norm_groups, rng);
            let mut conv = CausalConv3d::new((3, 3, 3), c, c, (1, 1, 1), rng);
            conv.kernel = conv.kernel.scale(0.5).detach_param();
            let noise_scale = cfg.noise_inject_stages.contains(&i).then(|| zeros_param(&[c]));
            let up = (i < stages).then(|| {
                let (ut, us) = cfg.stage_stride(stages - 1 - i);
                let conv = CausalConv3d::new((3, 3, 3), c, ch[i + 1] * ut * us * us, (1, 1, 1), rng);
                (conv, ut, us)
            });
            levels.push(DecoderLevel {
                norm,
                conv,
                noise_scale,
                up,
            });
        }
        let last = ch[stages];
        Self {
            time_in,
            time_out,
            conv_in,
            levels,
            norm_out: AdaGroupNorm::new(td, last, cfg.norm_groups, rng),
            conv_out: CausalConv3d::new((3, 3, 3), last, cfg.patch_channels(), (1, 1, 1), rng),
            time_dim: td,
            patch: (cfg.patch_spatial, cfg.patch_temporal),
        }
    }

    fn time_embedding(&self, t: f64) -> Tensor<S> {
        let e = timestep_embedding::<S>(&[t], self.time_dim, TIME_SCALE);
        self.time_out.forward(&self.time_in.forward(&e).silu()).silu()
    }

    /// Pixels `[T, H, W, 3]` from latents `[T', H', W', C]` at decoder timestep `t`.
    /// Injection noise is always drawn, so `rng` advances identically whatever
    /// the learned scales are.
    pub fn forward(&self, z: &Tensor<S>, t: f64, rng: &mut Rng) -> Result<Tensor<S>> {
        let temb = self.time_embedding(t);
        let mut h = self.conv_in.forward(z);
        for level in &self.levels {
            h = h.add(&level.conv.forward(&level.norm.forward(&h, &temb).silu()));
            if let Some(scale) = &level.noise_scale {
                let noise = Tensor::randn(h.shape(), rng);
                h = h.add(&noise.mul(scale));
            }
            if let Some((up, ut, us)) = &level.up {
                h = depth_to_space(&up.forward(&h), *ut, *us);
            }
        }
        let out = self.conv_out.forward(&self.norm_out.forward(&h, &temb).silu());
        unpatchify(&out, self.patch.0, self.patch.1, 3)
    }

    /// Sets every injection scale to `value` (tests and ablations).
    pub fn set_noise_scales(&mut self, value: f64) {
        for level in &mut self.levels {
            if let Some(s) = &mut level.noise_scale {
                *s = Tensor::param(s.shape(), vec![S::of(value); s.numel()]);
            }
        }
    }
}

impl<S: Scalar> Module<S> for Decoder<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.time_in.visit(&join(prefix, "time_in"), f);
        self.time_out.visit(&join(prefix, "time_out"), f);
        self.conv_in.visit(&join(prefix, "conv_in"), f);
        for (i, level) in self.levels.iter_mut().enumerate() {
            let p = join(prefix, &format!("level{i}"));
            level.norm.visit(&join(&p, "norm"), f);
            level.conv.visit(&join(&p, "conv"), f);
            if let Some(s) = &mut level.noise_scale {
                f(join(&p, "noise_scale"), s);
            }
            if let Some((up, _, _)) = &mut level.up {
                up.visit(&join(&p, "up"), f);
            }
        }
        self.norm_out.visit(&join(prefix, "norm_out"), f);
        self.conv_out.visit(&join(prefix, "conv_out"), f);
    }
}

/// Result of one training forward pass.
#[derive(Clone, Debug)]
pub struct VaeForward<S: Scalar = f32> {
    pub reconstruction: VideoTensor<S>,
    pub posterior: LatentPosterior<S>,
    /// `(1 - t) z0 + t eps`, what the decoder actually saw.
    pub decoder_input: Tensor<S>,
    pub z0: Tensor<S>,
}

#[derive(Clone, Debug)]
pub struct VideoVae<S: Scalar = f32> {
    pub cfg: VaeConfig,
    pub encoder: Encoder<S>,
    pub decoder: Decoder<S>,
}

impl<S: Scalar> VideoVae<S> {
    pub fn new(cfg: VaeConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let encoder = Encoder::new(&cfg, rng);
        let decoder = Decoder::new(&cfg, rng);
        Ok(Self { cfg, encoder, decoder })
    }

    pub fn encode(&self, x: &VideoTensor<S>) -> Result<LatentPosterior<S>> {
        let (t, h, w) = (x.frames(), x.height(), x.width());
        let (lt, lh, lw) = self.cfg.latent_dims(t, h, w)?;
        let (mean, logvar) = self.encoder.forward(&x.pixels)?;
        debug_assert_eq!(mean.shape(), &[lt, lh, lw, self.cfg.latent_channels]);
        LatentPosterior::new(mean, logvar, x.fps)
    }

    pub fn decode_denoise(&self, z: &LatentTensor<S>, t: f64, rng: &mut Rng) -> Result<VideoTensor<S>> {
        if !(0.0..=DECODER_MAX_T).contains(&t) {
            return Err(Error::Domain(format!("decoder timestep {t} outside [0, {DECODER_MAX_T}]")));
        }
        if z.channels() != self.cfg.latent_channels {
            return Err(Error::dim(format!(
                "latent has {} channels, decoder expects {}",
                z.channels(),
                self.cfg.latent_channels
            )));
        }
        VideoTensor::new(self.decoder.forward(&z.values, t, rng)?, z.fps)
    }

    /// Encode, sample, noise the latent to level `t` and decode at `t`.
    pub fn forward_train(&self, x: &VideoTensor<S>, t: f64, rng: &mut Rng) -> Result<VaeForward<S>> {
        let posterior = self.encode(x)?;
        let z0 = posterior.sample(rng).values;
        let eps = Tensor::randn(z0.shape(), rng);
        let decoder_input = if t == 0.0 {
            z0.clone()
        } else {
            z0.scale(1.0 - t).add(&eps.scale(t))
        };
        let reconstruction = self.decode_denoise(&LatentTensor::new(decoder_input.clone(), x.fps), t, rng)?;
        Ok(VaeForward {
            reconstruction,
            posterior,
            decoder_input,
            z0,
        })
    }
}

impl<S: Scalar> Module<S> for VideoVae<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }
}
