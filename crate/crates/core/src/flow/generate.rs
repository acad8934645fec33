use super::conditioning::ConditioningSpec;
use super::process::{euler_step, LatentNorm, VelocityModel};
use super::sampler::{inference_schedule, TimestepSampler};
use crate::dit::{CaptionEmbedding, TokenSequence};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{no_grad, Tensor};
use crate::vae::{LatentTensor, VideoTensor, VideoVae, DECODER_MAX_T};

/// Sampling settings. `t_final` is where the transformer stops and the
/// denoising decoder takes over.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerateConfig {
    pub steps: usize,
    pub t_final: f64,
    pub t_c: f64,
    pub sampler: TimestepSampler,
    /// Extra equal Euler steps from `t_final` down to 0. When nonzero the
    /// transformer finishes the trajectory and the decoder runs at `t = 0`.
    pub tail_steps: usize,
}

impl GenerateConfig {
    /// Timestep handed to the decoder.
    pub fn decoder_t(&self) -> f64 {
        if self.tail_steps > 0 {
            0.0
        } else {
            self.t_final
        }
    }

    pub fn schedule(&self, n_tokens: usize) -> Result<Vec<f64>> {
        let mut s = inference_schedule(self.steps, n_tokens, &self.sampler, self.t_final)?;
        let k = self.tail_steps;
        s.extend((1..=k).map(|i| self.t_final * (k - i) as f64 / k as f64));
        Ok(s)
    }
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            t_final: 0.05,
            t_c: 0.0,
            sampler: TimestepSampler::default(),
            tail_steps: 0,
        }
    }
}

/// Output of [`generate_latents`]: the latent state at the last schedule
/// point (still in the model's normalized space) and the schedule used.
pub struct LatentSample<S: Scalar> {
    pub tokens: TokenSequence<S>,
    pub schedule: Vec<f64>,
}

/// Euler integration from noise along [`GenerateConfig::schedule`]. Conditioning tokens are held
/// at `cond_tokens` (already normalized and noised to `t_c`).
pub fn generate_latents<S: Scalar, M: VelocityModel<S>>(
    model: &M,
    caption: &CaptionEmbedding<S>,
    template: &TokenSequence<S>,
    cfg: &GenerateConfig,
    rng: &mut Rng,
    conditioning: Option<(&ConditioningSpec, &Tensor<S>)>,
) -> Result<LatentSample<S>> {
    let schedule = cfg.schedule(template.len())?;
    let n = template.len();
    let c = template.channels();
    let mut z = Tensor::new(&[n, c], rng.normal_vec(n * c));
    let mut is_cond = vec![false; n];
    let mut t_c = 0.0;
    if let Some((spec, values)) = conditioning {
        spec.validate(cfg.t_final)?;
        if values.shape() != [spec.tokens.len(), c] {
            return Err(Error::dim(format!(
                "conditioning latents {:?} for {} tokens of {c} channels",
                values.shape(),
                spec.tokens.len()
            )));
        }
        t_c = spec.t_c;
        for &i in &spec.tokens {
            *is_cond.get_mut(i).ok_or_else(|| Error::dim(format!("conditioning token {i} of {n}")))? = true;
        }
    }
    let fix = |z: &Tensor<S>| -> Tensor<S> {
        let Some((spec, values)) = conditioning else {
            return z.clone();
        };
        let mut d = z.to_vec();
        for (k, &i) in spec.tokens.iter().enumerate() {
            d[i * c..(i + 1) * c].copy_from_slice(&values.data()[k * c..(k + 1) * c]);
        }
        Tensor::new(&[n, c], d)
    };
    z = fix(&z);
    no_grad(|| -> Result<()> {
        for w in schedule.windows(2) {
            let mut seq = template.with_tokens(z.clone());
            seq.timesteps = is_cond.iter().map(|&cnd| if cnd { t_c } else { w[0] }).collect();
            let v = model.velocity(&seq, caption)?;
            z = fix(&euler_step(&z, &v, w[0] - w[1]));
        }
        Ok(())
    })?;
    let mut tokens = template.with_tokens(z);
    tokens.timesteps = is_cond.iter().map(|&cnd| if cnd { t_c } else { cfg.decoder_t() }).collect();
    Ok(LatentSample { tokens, schedule })
}

/// Text(-and-image)-to-video: transformer denoising down to `t_final`, then
/// the VAE decoder performs the last step from `t_final` straight to pixels.
///
/// `frames`, `height`, `width` are pixel sizes. With `image`, that frame is
/// encoded (as a one-frame clip) and pins the first latent frame.
#[allow(clippy::too_many_arguments)]
pub fn generate<S: Scalar, M: VelocityModel<S>>(
    model: &M,
    vae: &VideoVae<S>,
    norm: &LatentNorm,
    caption: &CaptionEmbedding<S>,
    shape: (usize, usize, usize),
    fps: f64,
    cfg: &GenerateConfig,
    rng: &mut Rng,
    image: Option<&VideoTensor<S>>,
) -> Result<VideoTensor<S>> {
    if cfg.t_final > DECODER_MAX_T {
        return Err(Error::Domain(format!("t_final {} beyond the decoder range", cfg.t_final)));
    }
    let (lt, lh, lw) = vae.cfg.latent_dims(shape.0, shape.1, shape.2)?;
    let c = vae.cfg.latent_channels;
    let blank = LatentTensor::new(Tensor::zeros(&[lt, lh, lw, c]), fps);
    let template = TokenSequence::from_latent(&blank, &vae.cfg, 1.0)?;
    let cond = match image {
        None => None,
        Some(img) => {
            if img.frames() != 1 || img.height() != shape.1 || img.width() != shape.2 {
                return Err(Error::dim(format!(
                    "conditioning image {:?} for a {}x{} clip",
                    img.pixels.shape(),
                    shape.1,
                    shape.2
                )));
            }
            let lat = no_grad(|| vae.encode(img))?.mode();
            let values = norm.normalize(&lat.values.reshape(&[lh * lw, c]));
            let spec = ConditioningSpec::first_frame(&template, cfg.t_c);
            let noise = Tensor::new(values.shape(), rng.normal_vec(values.numel()));
            let values = super::process::noise_tokens(&values, &vec![cfg.t_c; lh * lw], &noise)?;
            Some((spec, values))
        }
    };
    let sample = generate_latents(model, caption, &template, cfg, rng, cond.as_ref().map(|(s, v)| (s, v)))?;
    let z = norm.denormalize(&sample.tokens.tokens);
    let latent = sample.tokens.to_latent(&z)?;
    no_grad(|| vae.decode_denoise(&latent, cfg.decoder_t(), rng))
}
