use crate::error::{Error, Result};

/// Geometry and widths of the video autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    /// Total spatial downscale per axis.
    pub spatial_factor: usize,
    /// Total temporal downscale (the first frame is always its own latent frame).
    pub temporal_factor: usize,
    pub latent_channels: usize,
    /// Space-to-depth extents applied to pixels before the first convolution.
    pub patch_spatial: usize,
    pub patch_temporal: usize,
    /// Encoder widths, one per resolution level (`stages() + 1` entries).
    pub enc_channels: Vec<usize>,
    /// Decoder widths from the latent level up (`stages() + 1` entries).
    pub dec_channels: Vec<usize>,
    /// Decoder levels (0 = latent resolution) that receive noise injection.
    pub noise_inject_stages: Vec<usize>,
    pub norm_groups: usize,
    pub time_embed_dim: usize,
}

impl VaeConfig {
    /// The 32x32x8, 128-channel autoencoder geometry.
    pub fn full_scale() -> Self {
        Self {
            spatial_factor: 32,
            temporal_factor: 8,
            latent_channels: 128,
            patch_spatial: 4,
            patch_temporal: 1,
            enc_channels: vec![128, 256, 512, 512],
            dec_channels: vec![512, 512, 256, 128],
            noise_inject_stages: vec![0, 1, 2, 3],
            norm_groups: 32,
            time_embed_dim: 256,
        }
    }

    /// Small default used by the trainers: 8x8x2 downscale to 16 channels.
    pub fn desk() -> Self {
        Self {
            spatial_factor: 8,
            temporal_factor: 2,
            latent_channels: 16,
            patch_spatial: 4,
            patch_temporal: 1,
            enc_channels: vec![32, 64],
            dec_channels: vec![64, 32],
            noise_inject_stages: vec![0, 1],
            norm_groups: 8,
            time_embed_dim: 64,
        }
    }

    /// Factors only, for arithmetic on other published geometries.
    pub fn factors(spatial_factor: usize, temporal_factor: usize, latent_channels: usize) -> Self {
        Self {
            spatial_factor,
            temporal_factor,
            latent_channels,
            patch_spatial: 1,
            patch_temporal: 1,
            enc_channels: Vec::new(),
            dec_channels: Vec::new(),
            noise_inject_stages: Vec::new(),
            norm_groups: 1,
            time_embed_dim: 0,
        }
    }

    pub fn spatial_stages(&self) -> usize {
        (self.spatial_factor / self.patch_spatial).trailing_zeros() as usize
    }

    pub fn temporal_stages(&self) -> usize {
        (self.temporal_factor / self.patch_temporal).trailing_zeros() as usize
    }

    /// Number of strided encoder stages (and upsampling decoder stages).
    pub fn stages(&self) -> usize {
        self.spatial_stages().max(self.temporal_stages())
    }

    /// `(temporal, spatial)` stride of encoder stage `i`.
    pub fn stage_stride(&self, i: usize) -> (usize, usize) {
        (
            if i < self.temporal_stages() { 2 } else { 1 },
            if i < self.spatial_stages() { 2 } else { 1 },
        )
    }

    pub fn patch_channels(&self) -> usize {
        3 * self.patch_spatial * self.patch_spatial * self.patch_temporal
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.spatial_factor == 0 || self.temporal_factor == 0 || self.latent_channels == 0 {
            return err("factors and channel count must be positive".into());
        }
        if self.patch_spatial == 0 || self.spatial_factor % self.patch_spatial != 0 {
            return err(format!(
                "spatial_factor {} not divisible by patch {}",
                self.spatial_factor, self.patch_spatial
            ));
        }
        if self.patch_temporal == 0 || self.temporal_factor % self.patch_temporal != 0 {
            return err(format!(
                "temporal_factor {} not divisible by patch {}",
                self.temporal_factor, self.patch_temporal
            ));
        }
        if !(self.spatial_factor / self.patch_spatial).is_power_of_two()
            || !(self.temporal_factor / self.patch_temporal).is_power_of_two()
        {
            return err("factors remaining after patchify must be powers of two".into());
        }
        let levels = self.stages() + 1;
        if self.enc_channels.len() != levels || self.dec_channels.len() != levels {
            return err(format!("need {levels} encoder and decoder widths"));
        }
        if self
            .enc_channels
            .iter()
            .chain(&self.dec_channels)
            .any(|&c| c == 0 || c % self.norm_groups != 0)
        {
            return err(format!("widths must be positive multiples of {} groups", self.norm_groups));
        }
        if let Some(&s) = self.noise_inject_stages.iter().find(|&&s| s >= levels) {
            return err(format!("noise injection level {s} out of range"));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return err("time_embed_dim must be even and positive".into());
        }
        Ok(())
    }

    /// Latent `(T', H', W')` for a pixel clip, checking divisibility.
    pub fn latent_dims(&self, t: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        if t == 0 || (t - 1) % self.temporal_factor != 0 {
            return Err(Error::dim(format!(
                "frame count {t} is not 1 mod {}",
                self.temporal_factor
            )));
        }
        if h % self.spatial_factor != 0 || w % self.spatial_factor != 0 {
            return Err(Error::dim(format!(
                "{h}x{w} not divisible by spatial factor {}",
                self.spatial_factor
            )));
        }
        Ok((1 + (t - 1) / self.temporal_factor, h / self.spatial_factor, w / self.spatial_factor))
    }

    pub fn pixel_dims(&self, lt: usize, lh: usize, lw: usize) -> (usize, usize, usize) {
        (
            1 + (lt - 1) * self.temporal_factor,
            lh * self.spatial_factor,
            lw * self.spatial_factor,
        )
    }

    pub fn token_count(&self, t: usize, h: usize, w: usize) -> Result<usize> {
        let (a, b, c) = self.latent_dims(t, h, w)?;
        Ok(a * b * c)
    }
}

/// Pixel values (3 channels) per latent value.
pub fn compression_ratio(cfg: &VaeConfig) -> f64 {
    (cfg.spatial_factor * cfg.spatial_factor * cfg.temporal_factor * 3) as f64 / cfg.latent_channels as f64
}

/// Pixels per transformer token when the transformer consumes latents as-is.
pub fn pixels_per_token(cfg: &VaeConfig) -> f64 {
    pixels_per_token_patched(cfg, (1, 1, 1))
}

/// Pixels per transformer token with a `(ph, pw, pt)` latent patchifier in front of the transformer.
pub fn pixels_per_token_patched(cfg: &VaeConfig, patch: (usize, usize, usize)) -> f64 {
    (cfg.spatial_factor * cfg.spatial_factor * cfg.temporal_factor * patch.0 * patch.1 * patch.2) as f64
}

/// One column of the published model comparison.
#[derive(Clone, Debug)]
pub struct ModelSpecRow {
    pub name: &'static str,
    pub vae: VaeConfig,
    pub transformer_patch: (usize, usize, usize),
    pub stated_compression: &'static str,
    pub stated_pixels_per_token: &'static str,
}

pub fn published_model_specs() -> Vec<ModelSpecRow> {
    let row = |name, s, t, c, p, comp, ppt| ModelSpecRow {
        name,
        vae: VaeConfig::factors(s, t, c),
        transformer_patch: p,
        stated_compression: comp,
        stated_pixels_per_token: ppt,
    };
    vec![
        row("MovieGen", 8, 8, 16, (2, 2, 1), "1:96", "1:2048"),
        row("HunyuanVideo", 8, 4, 16, (2, 2, 1), "1:48", "1:1024"),
        row("PyramidFlow", 8, 8, 16, (2, 2, 1), "1:96", "1:2048"),
        row("CogVideoX", 8, 4, 16, (2, 2, 1), "1:48", "1:1024"),
        row("Full-scale", 32, 8, 128, (1, 1, 1), "1:192", "1:8192"),
    ]
}
