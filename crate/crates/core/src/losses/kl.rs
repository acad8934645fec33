use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vae::LatentPosterior;

/// KL to a standard normal with the channel-shared log-variance broadcast over
/// channels: mean over positions and channels of `(mu^2 + e^lv - lv - 1) / 2`.
pub fn kl_uniform_logvar<S: Scalar>(p: &LatentPosterior<S>) -> Tensor<S> {
    let lv = p.clamped_logvar();
    p.mean
        .square()
        .add(&lv.exp().sub(&lv).add_scalar(-1.0))
        .scale(0.5)
        .mean()
}
