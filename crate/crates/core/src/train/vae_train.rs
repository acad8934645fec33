use std::path::{Path, PathBuf};

use super::dataset::Corpus;
use super::formats::CheckpointFile;
use super::metrics::{psnr, Accumulator, MetricsTable};
use crate::error::{Error, Result};
use crate::losses::{rgan_losses, total_vae_loss, RganDiscriminator, VaeLossWeights};
use crate::optim::{cosine_lr, Adam};
use crate::rng::Rng;
use crate::tensor::{no_grad, Tensor};
use crate::vae::{VaeConfig, VideoVae, DECODER_MAX_T};

/// Final learning rate as a fraction of the initial one.
pub const LR_FLOOR: f64 = 0.05;

pub const VAE_METRICS_COLUMNS: [&str; 9] = ["step", "mse", "dwt", "kl", "gan", "d_loss", "disc_acc", "total", "eval_psnr"];

#[derive(Clone, Debug, PartialEq)]
pub struct VaeTrainConfig {
    pub vae: VaeConfig,
    pub weights: VaeLossWeights,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub disc_lr: f64,
    pub disc_width: usize,
    /// Fraction of steps before the adversarial term enters the generator
    /// loss. The discriminator trains from the start.
    pub gan_start: f64,
    /// Fraction of steps over which the adversarial weight ramps linearly
    /// from zero to `weights.w_gan` once it is enabled.
    pub gan_ramp: f64,
    /// Decoder timesteps are drawn from `U[0, t_max]`.
    pub t_max: f64,
    pub eval_every: usize,
    /// Save an intermediate checkpoint every this many steps.
    pub checkpoint_every: Option<usize>,
    pub max_eval_clips: usize,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            vae: VaeConfig::desk(),
            weights: VaeLossWeights::desk(),
            steps: 2000,
            batch_size: 1,
            lr: 1e-3,
            disc_lr: 1e-3,
            disc_width: 16,
            gan_start: 0.3,
            gan_ramp: 0.2,
            t_max: DECODER_MAX_T,
            eval_every: 100,
            checkpoint_every: None,
            max_eval_clips: 8,
        }
    }
}

impl VaeTrainConfig {
    /// Loss weights in effect at `step` (1-based).
    pub fn gan_weights(&self, step: usize) -> VaeLossWeights {
        let into = step as f64 / self.steps.max(1) as f64 - self.gan_start;
        let ramp = if into <= 0.0 {
            0.0
        } else if self.gan_ramp <= 0.0 {
            1.0
        } else {
            (into / self.gan_ramp).min(1.0)
        };
        VaeLossWeights {
            w_gan: self.weights.w_gan * ramp,
            ..self.weights
        }
    }

    /// First step after the adversarial weight reached its full value.
    pub fn warmup_end(&self) -> usize {
        ((self.gan_start + self.gan_ramp) * self.steps as f64).ceil() as usize
    }
}

pub struct VaeTrainOutcome {
    pub vae: VideoVae<f32>,
    pub disc: RganDiscriminator<f32>,
    pub metrics: MetricsTable,
    /// `(step, path)` of every checkpoint written, including step 0 and the final one.
    pub checkpoints: Vec<(usize, PathBuf)>,
}

pub fn vae_checkpoint(vae: &mut VideoVae<f32>, disc: &mut RganDiscriminator<f32>) -> CheckpointFile {
    let mut c = CheckpointFile::from_module(vae);
    c.extend_prefixed("disc", CheckpointFile::from_module(disc));
    c
}

/// Restores a VAE trained with `cfg` from a checkpoint.
pub fn load_vae(ckpt: &CheckpointFile, cfg: &VaeConfig) -> Result<VideoVae<f32>> {
    let mut vae = VideoVae::new(cfg.clone(), &mut Rng::seeded(0))?;
    ckpt.load_into(&mut vae)?;
    Ok(vae)
}

/// Mean reconstruction PSNR (posterior mode, decoder at `t = 0`, output
/// clamped to `[0, 1]`).
pub fn eval_psnr(vae: &VideoVae<f32>, clips: &Corpus, rng: &mut Rng) -> Result<f64> {
    if clips.is_empty() {
        return Ok(f64::NAN);
    }
    let mut mse = 0.0;
    no_grad(|| -> Result<()> {
        for c in &clips.clips {
            let z = vae.encode(&c.video)?.mode();
            let r = vae.decode_denoise(&z, 0.0, rng)?.clamped();
            mse += r.pixels.mse(&c.video.pixels).item() as f64;
        }
        Ok(())
    })?;
    Ok(psnr(mse / clips.len() as f64))
}

fn save_at(dir: Option<&Path>, name: &str, ckpt: &CheckpointFile, out: &mut Vec<(usize, PathBuf)>, step: usize) -> Result<()> {
    if let Some(d) = dir {
        let p = d.join(name);
        ckpt.save(&p)?;
        out.push((step, p));
    }
    Ok(())
}

/// Alternating generator / discriminator training. With `out_dir`, writes
/// `vae_step000000.ltxk` (init), cadence checkpoints, `vae.ltxk` and
/// `vae_metrics.csv`.
pub fn train_vae(train: &Corpus, eval: &Corpus, cfg: &VaeTrainConfig, rng: &Rng, out_dir: Option<&Path>) -> Result<VaeTrainOutcome> {
    cfg.weights.validate()?;
    if train.is_empty() || cfg.batch_size == 0 || cfg.eval_every == 0 {
        return Err(Error::Config("vae training needs clips, batch_size > 0 and eval_every > 0".into()));
    }
    let mut vae = VideoVae::<f32>::new(cfg.vae.clone(), &mut rng.fork(1))?;
    let mut disc = RganDiscriminator::<f32>::new(cfg.disc_width, &mut rng.fork(2));
    let mut data_rng = rng.fork(3);
    let mut noise_rng = rng.fork(4);
    let mut eval_rng = rng.fork(5);
    let eval_clips = eval.subset(&(0..eval.len().min(cfg.max_eval_clips)).collect::<Vec<_>>());
    let mut opt_g = Adam::new(cfg.lr);
    let mut opt_d = Adam::new(cfg.disc_lr);
    let mut metrics = MetricsTable::new(&VAE_METRICS_COLUMNS);
    let mut checkpoints = Vec::new();
    save_at(out_dir, "vae_step000000.ltxk", &vae_checkpoint(&mut vae, &mut disc), &mut checkpoints, 0)?;
    let mut acc = Accumulator::default();

    for step in 1..=cfg.steps {
        opt_g.lr = cosine_lr(cfg.lr, step - 1, cfg.steps, LR_FLOOR);
        opt_d.lr = cosine_lr(cfg.disc_lr, step - 1, cfg.steps, LR_FLOOR);
        let weights = cfg.gan_weights(step);
        let gan_on = weights.w_gan > 0.0;
        let mut total: Option<Tensor<f32>> = None;
        let mut parts = [0.0f64; 4];
        let mut originals = Vec::new();
        let mut recons = Vec::new();
        for _ in 0..cfg.batch_size {
            let clip = &train.clips[data_rng.below(train.len())];
            let t = data_rng.uniform_range(0.0, cfg.t_max);
            let out = total_vae_loss(&clip.video, t, &mut noise_rng, &weights, &vae, gan_on.then_some(&disc), None)?;
            if !out.breakdown.total.is_finite() {
                let name = "vae_last_good.ltxk";
                save_at(out_dir, name, &vae_checkpoint(&mut vae, &mut disc), &mut checkpoints, step - 1)?;
                return Err(Error::Numeric(format!("non-finite vae loss at step {step}; kept the step {} weights", step - 1)));
            }
            let b = out.breakdown;
            for (p, v) in parts.iter_mut().zip([b.mse, b.dwt, b.kl, b.gan]) {
                *p += v / cfg.batch_size as f64;
            }
            total = Some(match total {
                None => out.loss,
                Some(acc) => acc.add(&out.loss),
            });
            originals.push(clip.video.pixels.clone());
            recons.push(out.forward.reconstruction.pixels);
        }
        let total = total.expect("batch_size > 0").scale(1.0 / cfg.batch_size as f64);
        total.backward();
        opt_g.step(&mut vae);

        let d = rgan_losses(&originals, &recons, &disc, &mut noise_rng)?;
        d.d_loss.backward();
        opt_d.step(&mut disc);

        acc.add(&[
            parts[0],
            parts[1],
            parts[2],
            parts[3],
            d.d_loss.item() as f64,
            d.accuracy,
            total.item() as f64,
        ]);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let mut row = vec![step as f64];
            row.extend(acc.take());
            row.push(eval_psnr(&vae, &eval_clips, &mut eval_rng)?);
            metrics.push(row);
        }
        if let Some(every) = cfg.checkpoint_every.filter(|&e| e > 0) {
            if step % every == 0 && step != cfg.steps {
                let name = format!("vae_step{step:06}.ltxk");
                save_at(out_dir, &name, &vae_checkpoint(&mut vae, &mut disc), &mut checkpoints, step)?;
            }
        }
    }
    if let Some(d) = out_dir {
        save_at(out_dir, "vae.ltxk", &vae_checkpoint(&mut vae, &mut disc), &mut checkpoints, cfg.steps)?;
        metrics.save(d.join("vae_metrics.csv"))?;
    }
    Ok(VaeTrainOutcome {
        vae,
        disc,
        metrics,
        checkpoints,
    })
}
