use crate::dit::Dit;
use crate::error::{Error, Result};
use crate::flow::{generate, GenerateConfig, LatentNorm};
use crate::losses::dwt3d_haar;
use crate::rng::Rng;
use crate::vae::{VideoTensor, VideoVae};

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Detail-subband energy per element: the seven Haar bands with a high-pass
/// letter, divided by the clip's element count.
pub fn detail_energy(video: &VideoTensor<f32>) -> f64 {
    dwt3d_haar(&video.pixels).detail_energy() / video.pixels.numel() as f64
}

pub fn psnr_between(a: &VideoTensor<f32>, b: &VideoTensor<f32>) -> f64 {
    let mse = a.pixels.mse(&b.pixels).item() as f64;
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Single-window SSIM per frame and channel (global statistics over the
/// frame), averaged. Values are taken on a `[0, 1]` scale.
pub fn ssim_global(a: &VideoTensor<f32>, b: &VideoTensor<f32>) -> f64 {
    let (t, h, w) = (a.frames(), a.height(), a.width());
    let (pa, pb) = (a.pixels.data(), b.pixels.data());
    let n = (h * w) as f64;
    let mut total = 0.0;
    for f in 0..t {
        for c in 0..3 {
            let idx = (0..h * w).map(|p| (f * h * w + p) * 3 + c);
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in idx {
                let (x, y) = (pa[i] as f64, pb[i] as f64);
                sa += x;
                sb += y;
                saa += x * x;
                sbb += y * y;
                sab += x * y;
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
    }
    total / (3 * t) as f64
}

/// One prompt/seed comparison. Variant `a` stops the transformer at
/// `t_final` and lets the decoder denoise; `b` integrates to zero first and
/// decodes at `t = 0`.
#[derive(Clone, Debug)]
pub struct DecoderAbRow {
    pub prompt: String,
    pub seed: u64,
    pub a: VideoTensor<f32>,
    pub b: VideoTensor<f32>,
    pub energy_a: f64,
    pub energy_b: f64,
    pub psnr_ab: f64,
    pub ssim_ab: f64,
}

#[derive(Clone, Debug)]
pub struct DecoderAbReport {
    pub rows: Vec<DecoderAbRow>,
}

impl DecoderAbReport {
    /// Rows where variant `a` carries at least as much detail energy.
    pub fn a_at_least_b(&self) -> usize {
        self.rows.iter().filter(|r| r.energy_a >= r.energy_b).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("prompt,seed,detail_energy_a,detail_energy_b,psnr_ab,ssim_ab\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.prompt, r.seed, r.energy_a, r.energy_b, r.psnr_ab, r.ssim_ab
            ));
        }
        s
    }
}

/// Settings for [`decoder_ab_test`]. `base.tail_steps` is ignored; variant
/// `b` uses `tail_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderAbConfig {
    pub base: GenerateConfig,
    pub tail_steps: usize,
    /// Pixel `(frames, height, width)`.
    pub shape: (usize, usize, usize),
    pub fps: f64,
}

impl Default for DecoderAbConfig {
    fn default() -> Self {
        Self {
            base: GenerateConfig::default(),
            tail_steps: 4,
            shape: (9, 32, 32),
            fps: 12.0,
        }
    }
}

/// Each prompt is `(label, caption token ids)`; both variants of a pair
/// start from the same seed.
pub fn decoder_ab_test(
    dit: &Dit<f32>,
    norm: &LatentNorm,
    vae: &VideoVae<f32>,
    prompts: &[(String, Vec<usize>)],
    seeds: &[u64],
    cfg: &DecoderAbConfig,
) -> Result<DecoderAbReport> {
    if cfg.tail_steps == 0 {
        return Err(Error::Config("decoder A/B needs tail_steps > 0 for the t = 0 variant".into()));
    }
    let a_cfg = GenerateConfig {
        tail_steps: 0,
        ..cfg.base.clone()
    };
    let b_cfg = GenerateConfig {
        tail_steps: cfg.tail_steps,
        ..cfg.base.clone()
    };
    let mut rows = Vec::new();
    for (label, ids) in prompts {
        let caption = dit.embed_caption(ids, &vec![true; ids.len()])?;
        for &seed in seeds {
            let run = |g: &GenerateConfig| {
                let mut rng = Rng::seeded(seed);
                generate(dit, vae, norm, &caption, cfg.shape, cfg.fps, g, &mut rng, None).map(|v| v.clamped())
            };
            let a = run(&a_cfg)?;
            let b = run(&b_cfg)?;
            rows.push(DecoderAbRow {
                prompt: label.clone(),
                seed,
                energy_a: detail_energy(&a),
                energy_b: detail_energy(&b),
                psnr_ab: psnr_between(&a, &b),
                ssim_ab: ssim_global(&a, &b),
                a,
                b,
            });
        }
    }
    Ok(DecoderAbReport { rows })
}
