//! Rectified flow: linear noising, velocity regression, shifted timestep
//! sampling, Euler sampling with per-token conditioning, and the hand-off to
//! the denoising decoder.

mod conditioning;
mod generate;
mod process;
mod sampler;

pub use conditioning::{apply_train_conditioning, first_frame_tokens, ConditioningSpec, TrainConditioning, TRAIN_COND_MAX_T};
pub use generate::{generate, generate_latents, GenerateConfig, LatentSample};
pub use process::{
    euler_step, flow_loss, flow_loss_with, noise_forward, noise_tokens, velocity_target, LatentNorm, VelocityModel,
};
pub use sampler::{inference_schedule, sample_timesteps, shift_timestep, unshift_timestep, BaseLaw, TimestepSampler};
