use super::{dwt_loss, kl_uniform_logvar, rgan_losses, RganDiscriminator};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vae::{VaeForward, VideoTensor, VideoVae};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaeLossWeights {
    pub w_mse: f64,
    pub w_dwt: f64,
    pub w_kl: f64,
    pub w_gan: f64,
}

impl Default for VaeLossWeights {
    fn default() -> Self {
        Self {
            w_mse: 1.0,
            w_dwt: 0.5,
            w_kl: 1e-6,
            w_gan: 0.1,
        }
    }
}

impl VaeLossWeights {
    /// Weights used by the desk trainer. On small sparse clips the summed L1
    /// subband term drives the decoder to the empty background, and the
    /// adversarial term overpowers reconstruction at larger weights.
    pub fn desk() -> Self {
        Self {
            w_mse: 1.0,
            w_dwt: 0.03,
            w_kl: 1e-6,
            w_gan: 0.003,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_mse, self.w_dwt, self.w_kl, self.w_gan];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be finite and nonnegative: {self:?}")))
        }
    }
}

/// Optional perceptual term: any external feature distance between two clips.
pub trait PerceptualHook<S: Scalar> {
    fn distance(&self, x: &Tensor<S>, x_hat: &Tensor<S>) -> Tensor<S>;
}

/// Unweighted values of each term, for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VaeLossBreakdown {
    pub mse: f64,
    pub dwt: f64,
    pub kl: f64,
    pub gan: f64,
    pub perceptual: f64,
    pub total: f64,
}

pub struct VaeLossOutput<S: Scalar = f32> {
    pub loss: Tensor<S>,
    pub breakdown: VaeLossBreakdown,
    pub forward: VaeForward<S>,
}

/// Weighted VAE objective on one clip. The GAN term is only evaluated when a
/// discriminator is given and `w_gan > 0`.
#[allow(clippy::too_many_arguments)]
pub fn total_vae_loss<S: Scalar>(
    x: &VideoTensor<S>,
    t: f64,
    rng: &mut Rng,
    weights: &VaeLossWeights,
    vae: &VideoVae<S>,
    disc: Option<&RganDiscriminator<S>>,
    perceptual: Option<(&dyn PerceptualHook<S>, f64)>,
) -> Result<VaeLossOutput<S>> {
    weights.validate()?;
    let forward = vae.forward_train(x, t, rng)?;
    let x_hat = &forward.reconstruction.pixels;
    let mse = x_hat.mse(&x.pixels);
    let dwt = dwt_loss(&x.pixels, x_hat)?;
    let kl = kl_uniform_logvar(&forward.posterior);
    let mut loss = mse.scale(weights.w_mse).add(&dwt.scale(weights.w_dwt)).add(&kl.scale(weights.w_kl));
    let mut breakdown = VaeLossBreakdown {
        mse: mse.item().to_f64().unwrap(),
        dwt: dwt.item().to_f64().unwrap(),
        kl: kl.item().to_f64().unwrap(),
        ..Default::default()
    };
    if let Some(d) = disc.filter(|_| weights.w_gan > 0.0) {
        let g = rgan_losses(&[x.pixels.clone()], &[x_hat.clone()], d, rng)?.g_loss;
        breakdown.gan = g.item().to_f64().unwrap();
        loss = loss.add(&g.scale(weights.w_gan));
    }
    if let Some((hook, w)) = perceptual.filter(|(_, w)| *w > 0.0) {
        let p = hook.distance(&x.pixels, x_hat);
        breakdown.perceptual = p.item().to_f64().unwrap();
        loss = loss.add(&p.scale(w));
    }
    breakdown.total = loss.item().to_f64().unwrap();
    Ok(VaeLossOutput {
        loss,
        breakdown,
        forward,
    })
}
