//! Config-file keys and their mapping onto library settings.

use std::path::PathBuf;
use std::str::FromStr;

use vidiff::analysis::FlatConfig;
use vidiff::dit::{DitConfig, FrequencySpacing};
use vidiff::flow::{BaseLaw, GenerateConfig, TimestepSampler};
use vidiff::train::Bucket;
use vidiff::vae::VaeConfig;
use vidiff::{Error, Result};

pub const VAE_KEYS: &[&str] = &[
    "vae.spatial_factor",
    "vae.temporal_factor",
    "vae.latent_channels",
    "vae.patch_spatial",
    "vae.patch_temporal",
    "vae.enc_channels",
    "vae.dec_channels",
    "vae.noise_inject_stages",
    "vae.norm_groups",
    "vae.time_embed_dim",
];

pub const DIT_KEYS: &[&str] = &[
    "dit.hidden_dim",
    "dit.heads",
    "dit.blocks",
    "dit.ffn_factor",
    "dit.vocab_size",
    "dit.text_dim",
    "dit.time_embed_dim",
    "dit.rope_f_min",
    "dit.rope_f_max",
    "dit.rope_spacing",
    "dit.max_width",
    "dit.max_height",
    "dit.max_duration",
];

pub const SAMPLER_KEYS: &[&str] = &["sampler.base", "sampler.m", "sampler.s", "sampler.n_ref", "sampler.clamp"];

pub const GENERATE_KEYS: &[&str] = &["steps", "t_final", "t_c", "tail_steps", "frames", "height", "width", "fps"];

pub fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.concat()
}

/// Comma-separated list where an empty value means an empty list.
pub fn list<T: FromStr>(cfg: &FlatConfig, key: &str) -> Result<Option<Vec<T>>> {
    match cfg.raw(key) {
        Some(v) if v.is_empty() => Ok(Some(Vec::new())),
        _ => cfg.get_list(key),
    }
}

pub fn path(cfg: &FlatConfig, key: &str) -> Result<PathBuf> {
    cfg.require::<String>(key).map(PathBuf::from)
}

pub fn vae_config(cfg: &FlatConfig) -> Result<VaeConfig> {
    let d = VaeConfig::desk();
    let v = VaeConfig {
        spatial_factor: cfg.get_or("vae.spatial_factor", d.spatial_factor)?,
        temporal_factor: cfg.get_or("vae.temporal_factor", d.temporal_factor)?,
        latent_channels: cfg.get_or("vae.latent_channels", d.latent_channels)?,
        patch_spatial: cfg.get_or("vae.patch_spatial", d.patch_spatial)?,
        patch_temporal: cfg.get_or("vae.patch_temporal", d.patch_temporal)?,
        enc_channels: list(cfg, "vae.enc_channels")?.unwrap_or(d.enc_channels),
        dec_channels: list(cfg, "vae.dec_channels")?.unwrap_or(d.dec_channels),
        noise_inject_stages: list(cfg, "vae.noise_inject_stages")?.unwrap_or(d.noise_inject_stages),
        norm_groups: cfg.get_or("vae.norm_groups", d.norm_groups)?,
        time_embed_dim: cfg.get_or("vae.time_embed_dim", d.time_embed_dim)?,
    };
    v.validate()?;
    Ok(v)
}

pub fn spacing(name: &str) -> Result<FrequencySpacing> {
    match name {
        "exponential" => Ok(FrequencySpacing::Exponential),
        "inverse-exponential" => Ok(FrequencySpacing::InverseExponential),
        _ => Err(Error::Config(format!("rope spacing {name:?}; expected exponential or inverse-exponential"))),
    }
}

/// Latent channels always follow the autoencoder.
pub fn dit_config(cfg: &FlatConfig, latent_channels: usize) -> Result<DitConfig> {
    let d = DitConfig::desk();
    let mut c = DitConfig {
        hidden_dim: cfg.get_or("dit.hidden_dim", d.hidden_dim)?,
        heads: cfg.get_or("dit.heads", d.heads)?,
        blocks: cfg.get_or("dit.blocks", d.blocks)?,
        ffn_factor: cfg.get_or("dit.ffn_factor", d.ffn_factor)?,
        latent_channels,
        vocab_size: cfg.get_or("dit.vocab_size", d.vocab_size)?,
        text_dim: cfg.get_or("dit.text_dim", d.text_dim)?,
        time_embed_dim: cfg.get_or("dit.time_embed_dim", d.time_embed_dim)?,
        rope: d.rope.clone(),
        max_width: cfg.get_or("dit.max_width", d.max_width)?,
        max_height: cfg.get_or("dit.max_height", d.max_height)?,
        max_duration: cfg.get_or("dit.max_duration", d.max_duration)?,
    };
    c.rope.f_min = cfg.get_or("dit.rope_f_min", c.rope.f_min)?;
    c.rope.f_max = cfg.get_or("dit.rope_f_max", c.rope.f_max)?;
    if let Some(s) = cfg.raw("dit.rope_spacing") {
        c.rope.spacing = spacing(s)?;
    }
    c.validate()?;
    Ok(c)
}

pub fn sampler(cfg: &FlatConfig) -> Result<TimestepSampler> {
    let d = TimestepSampler::default();
    let base = match cfg.raw("sampler.base") {
        None => d.base,
        Some("logit-normal") => BaseLaw::LogitNormal,
        Some("log-normal") => BaseLaw::LogNormal,
        Some(b) => return Err(Error::Config(format!("sampler.base {b:?}; expected logit-normal or log-normal"))),
    };
    let clamp = match list::<f64>(cfg, "sampler.clamp")? {
        None => d.clamp,
        Some(v) if v.len() == 2 => (v[0], v[1]),
        Some(_) => return Err(Error::Config("sampler.clamp takes two quantiles".into())),
    };
    let s = TimestepSampler {
        base,
        m: cfg.get_or("sampler.m", d.m)?,
        s: cfg.get_or("sampler.s", d.s)?,
        n_ref: cfg.get_or("sampler.n_ref", d.n_ref)?,
        clamp,
    };
    s.validate()?;
    Ok(s)
}

pub fn generate_config(cfg: &FlatConfig) -> Result<GenerateConfig> {
    let d = GenerateConfig::default();
    Ok(GenerateConfig {
        steps: cfg.get_or("steps", d.steps)?,
        t_final: cfg.get_or("t_final", d.t_final)?,
        t_c: cfg.get_or("t_c", d.t_c)?,
        sampler: sampler(cfg)?,
        tail_steps: cfg.get_or("tail_steps", d.tail_steps)?,
    })
}

/// Pixel `(frames, height, width)` and fps.
pub fn shape(cfg: &FlatConfig) -> Result<((usize, usize, usize), f64)> {
    Ok((
        (cfg.get_or("frames", 9)?, cfg.get_or("height", 32)?, cfg.get_or("width", 32)?),
        cfg.get_or("fps", 12.0)?,
    ))
}

/// `FxHxW` items, comma separated.
pub fn buckets(text: &str) -> Result<Vec<Bucket>> {
    text.split(',')
        .map(|item| {
            let dims: Vec<usize> = item
                .trim()
                .split('x')
                .map(|d| d.parse().map_err(|_| Error::Config(format!("bad bucket {item:?}; expected FxHxW"))))
                .collect::<Result<_>>()?;
            match dims[..] {
                [f, h, w] => Ok(Bucket::new(f, h, w)),
                _ => Err(Error::Config(format!("bad bucket {item:?}; expected FxHxW"))),
            }
        })
        .collect()
}
