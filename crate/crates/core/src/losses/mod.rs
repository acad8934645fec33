//! Training objective of the video autoencoder: pixel MSE, 3D wavelet L1,
//! channel-shared KL and the Reconstruction-GAN.

mod dwt;
mod kl;
mod rgan;
mod total;

pub use dwt::{dwt3d_haar, dwt_loss, DwtSubbands, SUBBAND_LABELS};
pub use kl::kl_uniform_logvar;
pub use rgan::{discriminator_hinge, rgan_discriminator, rgan_losses, DiscriminatorBatch, RganDiscriminator, RganLosses};
pub use total::{total_vae_loss, PerceptualHook, VaeLossBreakdown, VaeLossOutput, VaeLossWeights};
