//! Causal video autoencoder with a timestep-conditioned denoising decoder.

mod config;
mod model;
mod video;

pub use config::{
    compression_ratio, pixels_per_token, pixels_per_token_patched, published_model_specs, ModelSpecRow, VaeConfig,
};
pub use model::{
    Decoder, Encoder, LatentPosterior, VaeForward, VideoVae, DECODER_MAX_T, LOGVAR_MAX, LOGVAR_MIN,
};
pub use video::{patchify, unpatchify, LatentTensor, VideoTensor};
