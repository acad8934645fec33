//! Denoising transformer: QK-normalized rotary self-attention, caption
//! cross-attention and per-token timestep modulation.

mod attention;
mod config;
mod model;
mod rope;
mod tokens;

pub use attention::{Attended, CrossAttention, SelfAttention};
pub use config::{DitConfig, FrequencySpacing, RopeConfig};
pub use model::{adaln_modulate, dit_forward, Dit, DitBlock, Modulation, TimeConditioning, TIME_SCALE};
pub use rope::{apply_rope, axis_frequencies, normalize_coords, rope_frequencies, RopeTables};
pub use tokens::{latent_coords, CaptionEmbedding, TokenSequence};
