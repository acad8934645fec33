use super::sampler::TimestepSampler;
use crate::dit::{CaptionEmbedding, Dit, TokenSequence};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vae::LatentTensor;

/// Anything that predicts velocity for a token sequence.
pub trait VelocityModel<S: Scalar> {
    fn velocity(&self, seq: &TokenSequence<S>, caption: &CaptionEmbedding<S>) -> Result<Tensor<S>>;
}

impl<S: Scalar> VelocityModel<S> for Dit<S> {
    fn velocity(&self, seq: &TokenSequence<S>, caption: &CaptionEmbedding<S>) -> Result<Tensor<S>> {
        self.forward(seq, caption)
    }
}

fn per_token_column<S: Scalar>(t: &[f64]) -> Tensor<S> {
    Tensor::new(&[t.len(), 1], t.iter().map(|&v| S::of(v)).collect())
}

/// `(1 - t) z0 + t eps` for token rows `[N, C]` with one `t` per row.
pub fn noise_tokens<S: Scalar>(z0: &Tensor<S>, t: &[f64], eps: &Tensor<S>) -> Result<Tensor<S>> {
    if z0.shape() != eps.shape() || z0.rank() != 2 || z0.dim(0) != t.len() {
        return Err(Error::dim(format!(
            "noising {:?} with noise {:?} and {} timesteps",
            z0.shape(),
            eps.shape(),
            t.len()
        )));
    }
    let keep: Vec<f64> = t.iter().map(|v| 1.0 - v).collect();
    Ok(z0.mul(&per_token_column(&keep)).add(&eps.mul(&per_token_column(t))))
}

/// Latent-clip form of [`noise_tokens`]; `t` has one entry per latent token in
/// row-major `(t, h, w)` order.
pub fn noise_forward<S: Scalar>(z0: &LatentTensor<S>, t: &[f64], eps: &LatentTensor<S>) -> Result<LatentTensor<S>> {
    let (n, c) = (z0.tokens(), z0.channels());
    let z = noise_tokens(&z0.values.reshape(&[n, c]), t, &eps.values.reshape(&[n, c]))?;
    Ok(LatentTensor::new(z.reshape(z0.values.shape()), z0.fps))
}

pub fn velocity_target<S: Scalar>(z0: &Tensor<S>, eps: &Tensor<S>) -> Tensor<S> {
    eps.sub(z0)
}

/// `z - dt * v`.
pub fn euler_step<S: Scalar>(z: &Tensor<S>, v: &Tensor<S>, dt: f64) -> Tensor<S> {
    assert!(dt > 0.0, "euler step needs dt > 0, got {dt}");
    z.sub(&v.scale(dt))
}

/// Per-channel affine map between VAE latents and the unit-scale space the
/// transformer is trained in.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LatentNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Statistics of `[.., C]` tensors, pooled.
    pub fn fit<S: Scalar>(samples: &[Tensor<S>]) -> Self {
        let c = samples[0].dim(samples[0].rank() - 1);
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut n = 0usize;
        for s in samples {
            for row in s.data().chunks(c) {
                for (j, v) in row.iter().enumerate() {
                    let v = v.to_f64().unwrap();
                    sum[j] += v;
                    sq[j] += v * v;
                }
                n += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt().max(1e-6))
            .collect();
        Self { mean, std }
    }

    fn map<S: Scalar>(&self, x: &Tensor<S>, f: impl Fn(f64, f64, f64) -> f64) -> Tensor<S> {
        let c = self.mean.len();
        assert_eq!(x.dim(x.rank() - 1), c, "latent norm channel count");
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| S::of(f(v.to_f64().unwrap(), self.mean[i % c], self.std[i % c])))
            .collect();
        Tensor::new(x.shape(), data)
    }

    pub fn normalize<S: Scalar>(&self, x: &Tensor<S>) -> Tensor<S> {
        self.map(x, |v, m, s| (v - m) / s)
    }

    pub fn denormalize<S: Scalar>(&self, x: &Tensor<S>) -> Tensor<S> {
        self.map(x, |v, m, s| v * s + m)
    }
}

/// Velocity regression at given per-token timesteps and noise. Tokens with
/// `loss_mask[i] == false` (conditioning tokens) are left out of the mean.
pub fn flow_loss_with<S: Scalar, M: VelocityModel<S>>(
    model: &M,
    clean: &TokenSequence<S>,
    caption: &CaptionEmbedding<S>,
    t: &[f64],
    eps: &Tensor<S>,
    loss_mask: Option<&[bool]>,
) -> Result<Tensor<S>> {
    let z_t = noise_tokens(&clean.tokens, t, eps)?;
    let mut seq = clean.with_tokens(z_t);
    seq.timesteps = t.to_vec();
    let pred = model.velocity(&seq, caption)?;
    let target = velocity_target(&clean.tokens, eps);
    let err = pred.sub(&target).square();
    match loss_mask {
        None => Ok(err.mean()),
        Some(mask) => {
            let kept = mask.iter().filter(|&&m| m).count();
            if kept == 0 {
                return Ok(Tensor::scalar(S::zero()));
            }
            let w: Vec<S> = mask.iter().map(|&m| if m { S::one() } else { S::zero() }).collect();
            let denom = (kept * clean.channels()) as f64;
            Ok(err.mul(&Tensor::new(&[mask.len(), 1], w)).sum().scale(1.0 / denom))
        }
    }
}

/// One-draw flow objective: a shared `t` from the sampler and fresh noise.
pub fn flow_loss<S: Scalar, M: VelocityModel<S>>(
    model: &M,
    clean: &TokenSequence<S>,
    caption: &CaptionEmbedding<S>,
    sampler: &TimestepSampler,
    rng: &mut Rng,
) -> Result<Tensor<S>> {
    let t = sampler.sample(clean.len(), rng);
    let eps = Tensor::new(clean.tokens.shape(), rng.normal_vec(clean.tokens.numel()));
    flow_loss_with(model, clean, caption, &vec![t; clean.len()], &eps, None)
}
