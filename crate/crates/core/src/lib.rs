//! Desk-scale latent video diffusion.
//!
//! A causal video autoencoder whose decoder also performs the last denoising
//! step, a diffusion transformer with normalized fractional RoPE and
//! QK-normalization, rectified-flow training and sampling with per-token
//! timesteps, plus the harness, file formats and analyses around them.
//!
//! All numeric types are generic over [`Scalar`] (`f32` or `f64`); the `*32`
//! aliases below are the single-precision types used everywhere outside
//! gradient verification.

pub mod analysis;
pub mod dit;
pub mod error;
pub mod flow;
pub mod layers;
pub mod losses;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod vae;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type VideoVae32 = vae::VideoVae<f32>;
pub type VideoTensor32 = vae::VideoTensor<f32>;
pub type LatentTensor32 = vae::LatentTensor<f32>;
pub type Dit32 = dit::Dit<f32>;
pub type TokenSequence32 = dit::TokenSequence<f32>;
