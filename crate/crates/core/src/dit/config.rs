use crate::error::{Error, Result};

/// How RoPE frequencies are laid out across the component pairs of one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrequencySpacing {
    /// Geometric growth `f_min * g^j`: dense at low frequencies.
    Exponential,
    /// Mirror profile with the same endpoints: `f_min + f_max - f_{n-1-j}`,
    /// dense at high frequencies.
    InverseExponential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RopeConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub spacing: FrequencySpacing,
}

impl Default for RopeConfig {
    fn default() -> Self {
        Self {
            f_min: 1.0,
            f_max: 1e4,
            spacing: FrequencySpacing::Exponential,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DitConfig {
    pub hidden_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn_factor: usize,
    pub latent_channels: usize,
    pub vocab_size: usize,
    pub text_dim: usize,
    pub time_embed_dim: usize,
    pub rope: RopeConfig,
    pub max_width: f64,
    pub max_height: f64,
    pub max_duration: f64,
}

impl DitConfig {
    /// 2048-wide, 28-block transformer (geometry only).
    pub fn full_scale() -> Self {
        Self {
            hidden_dim: 2048,
            heads: 32,
            blocks: 28,
            ffn_factor: 4,
            latent_channels: 128,
            vocab_size: 64,
            text_dim: 4096,
            time_embed_dim: 256,
            rope: RopeConfig::default(),
            max_width: 2048.0,
            max_height: 2048.0,
            max_duration: 20.0,
        }
    }

    pub fn desk() -> Self {
        Self {
            hidden_dim: 64,
            heads: 2,
            blocks: 2,
            ffn_factor: 4,
            latent_channels: 16,
            vocab_size: 64,
            text_dim: 64,
            time_embed_dim: 64,
            rope: RopeConfig::default(),
            max_width: 64.0,
            max_height: 64.0,
            max_duration: 1.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    /// `(d_t, d_x, d_y)`: equal even shares for x and y, the rest to time.
    pub fn axis_split(&self) -> (usize, usize, usize) {
        let hd = self.head_dim();
        let share = (hd / 3) & !1;
        (hd - 2 * share, share, share)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return err(format!("hidden_dim {} not divisible by {} heads", self.hidden_dim, self.heads));
        }
        if self.head_dim() % 2 != 0 {
            return err(format!("head dim {} must be even", self.head_dim()));
        }
        let (dt, dx, dy) = self.axis_split();
        if dx == 0 || dy == 0 || dt % 2 != 0 {
            return err(format!("head dim {} too small for a 3-axis split", self.head_dim()));
        }
        debug_assert_eq!(dt + dx + dy, self.head_dim());
        if !(self.rope.f_min > 0.0 && self.rope.f_max > self.rope.f_min) {
            return err("rope needs 0 < f_min < f_max".into());
        }
        if !(self.max_width > 0.0 && self.max_height > 0.0 && self.max_duration > 0.0) {
            return err("coordinate maxima must be positive".into());
        }
        if self.time_embed_dim % 2 != 0 || self.text_dim == 0 || self.latent_channels == 0 {
            return err("time_embed_dim must be even; text and latent widths positive".into());
        }
        Ok(())
    }
}
