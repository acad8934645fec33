use std::path::Path;

use super::batching::plan_batches;
use super::dataset::Corpus;
use super::formats::CheckpointFile;
use super::metrics::{Accumulator, MetricsTable};
use super::scene::caption_ids;
use super::vae_train::LR_FLOOR;
use crate::dit::{CaptionEmbedding, Dit, DitConfig, TokenSequence};
use crate::error::{Error, Result};
use crate::flow::{apply_train_conditioning, flow_loss_with, LatentNorm, TimestepSampler};
use crate::optim::{cosine_lr, Adam};
use crate::rng::Rng;
use crate::tensor::{no_grad, Tensor};
use crate::vae::{LatentTensor, VideoVae};

pub const DIT_METRICS_COLUMNS: [&str; 5] = ["step", "flow_loss", "eval_flow_loss", "zero_baseline", "grad_norm"];

#[derive(Clone, Debug, PartialEq)]
pub struct DitTrainConfig {
    pub dit: DitConfig,
    pub sampler: TimestepSampler,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub p_cond: f64,
    /// Common token count after dropping.
    pub target_tokens: usize,
    pub eval_every: usize,
    pub eval_draws: usize,
    /// Pair every clip with another clip's caption (ablation).
    pub shuffle_captions: bool,
}

impl Default for DitTrainConfig {
    fn default() -> Self {
        Self {
            dit: DitConfig::desk(),
            sampler: TimestepSampler::default(),
            steps: 5000,
            batch_size: 4,
            lr: 1e-3,
            weight_decay: 0.01,
            p_cond: 0.3,
            target_tokens: 64,
            eval_every: 250,
            eval_draws: 64,
            shuffle_captions: false,
        }
    }
}

pub struct DitTrainOutcome {
    pub dit: Dit<f32>,
    pub norm: LatentNorm,
    pub metrics: MetricsTable,
    /// Zero-model loss `E|eps - z0|^2` on the eval draws.
    pub zero_baseline: f64,
}

/// Posterior means of every clip.
pub fn encode_corpus(vae: &VideoVae<f32>, corpus: &Corpus) -> Result<Vec<LatentTensor<f32>>> {
    no_grad(|| corpus.clips.iter().map(|c| Ok(vae.encode(&c.video)?.mode())).collect())
}

pub fn dit_checkpoint(dit: &mut Dit<f32>, norm: &LatentNorm) -> CheckpointFile {
    let mut c = CheckpointFile::from_module(dit);
    let as_tensor = |v: &[f64]| Tensor::<f32>::new(&[v.len()], v.iter().map(|&x| x as f32).collect());
    c.push("latent_norm.mean", &as_tensor(&norm.mean));
    c.push("latent_norm.std", &as_tensor(&norm.std));
    c
}

pub fn load_dit(ckpt: &CheckpointFile, cfg: &DitConfig) -> Result<(Dit<f32>, LatentNorm)> {
    let mut dit = Dit::new(cfg.clone(), &mut Rng::seeded(0))?;
    ckpt.load_into(&mut dit)?;
    let v = |name: &str| -> Result<Vec<f64>> { Ok(ckpt.tensor::<f32>(name)?.data().iter().map(|&x| x as f64).collect()) };
    Ok((
        dit,
        LatentNorm {
            mean: v("latent_norm.mean")?,
            std: v("latent_norm.std")?,
        },
    ))
}

struct Prepared {
    seq: TokenSequence<f32>,
    caption: Vec<usize>,
}

fn prepare(latents: &[LatentTensor<f32>], corpus: &Corpus, norm: &LatentNorm, vae: &VideoVae<f32>) -> Result<Vec<Prepared>> {
    latents
        .iter()
        .zip(&corpus.clips)
        .map(|(z, clip)| {
            let z = LatentTensor::new(norm.normalize(&z.values), z.fps);
            Ok(Prepared {
                seq: TokenSequence::from_latent(&z, &vae.cfg, 1.0)?,
                caption: caption_ids(&clip.caption)?,
            })
        })
        .collect()
}

fn caption_for(dit: &Dit<f32>, ids: &[usize]) -> Result<CaptionEmbedding<f32>> {
    dit.embed_caption(ids, &vec![true; ids.len()])
}

/// Fixed eval draws `(clip, t, eps)` scored without dropping or conditioning.
fn eval_loss(dit: &Dit<f32>, items: &[Prepared], draws: &[(usize, f64, Tensor<f32>)]) -> Result<f64> {
    no_grad(|| {
        let mut sum = 0.0;
        for (i, t, eps) in draws {
            let p = &items[*i];
            let cap = caption_for(dit, &p.caption)?;
            let l = flow_loss_with(dit, &p.seq, &cap, &vec![*t; p.seq.len()], eps, None)?;
            sum += l.item() as f64;
        }
        Ok(sum / draws.len().max(1) as f64)
    })
}

/// Flow-matching training on frozen-VAE latents with token dropping,
/// first-frame conditioning and AdamW. With `out_dir`, writes `dit.ltxk`
/// and `dit_metrics.csv`.
pub fn train_dit(
    train: &Corpus,
    eval: &Corpus,
    vae: &VideoVae<f32>,
    cfg: &DitTrainConfig,
    rng: &Rng,
    out_dir: Option<&Path>,
) -> Result<DitTrainOutcome> {
    cfg.sampler.validate()?;
    if train.is_empty() || cfg.batch_size == 0 || cfg.eval_every == 0 {
        return Err(Error::Config("dit training needs clips, batch_size > 0 and eval_every > 0".into()));
    }
    if cfg.dit.latent_channels != vae.cfg.latent_channels {
        return Err(Error::Config(format!(
            "dit expects {} latent channels, vae produces {}",
            cfg.dit.latent_channels, vae.cfg.latent_channels
        )));
    }
    let train_lat = encode_corpus(vae, train)?;
    let norm = LatentNorm::fit(&train_lat.iter().map(|z| z.values.clone()).collect::<Vec<_>>());
    let mut items = prepare(&train_lat, train, &norm, vae)?;
    if cfg.shuffle_captions {
        let mut caps: Vec<Vec<usize>> = items.iter().map(|p| p.caption.clone()).collect();
        rng.fork(6).shuffle(&mut caps);
        for (p, c) in items.iter_mut().zip(caps) {
            p.caption = c;
        }
    }
    let eval_src = if eval.is_empty() { train } else { eval };
    let eval_items = prepare(&encode_corpus(vae, eval_src)?, eval_src, &norm, vae)?;

    let mut dit = Dit::<f32>::new(cfg.dit.clone(), &mut rng.fork(1))?;
    let mut opt = Adam::adamw(cfg.lr, cfg.weight_decay);
    let buckets: Vec<_> = train.clips.iter().map(|c| c.bucket()).collect();
    let mut batches = plan_batches(&buckets, &vae.cfg, cfg.target_tokens, cfg.batch_size, &rng.fork(2))?;
    let mut step_rng = rng.fork(3);

    let mut eval_rng = rng.fork(4);
    let draws: Vec<(usize, f64, Tensor<f32>)> = (0..cfg.eval_draws)
        .map(|k| {
            let i = k % eval_items.len();
            let n = eval_items[i].seq.len();
            let t = cfg.sampler.sample(n, &mut eval_rng);
            let eps = Tensor::new(eval_items[i].seq.tokens.shape(), eval_rng.normal_vec(eval_items[i].seq.tokens.numel()));
            (i, t, eps)
        })
        .collect();
    let zero_baseline = draws
        .iter()
        .map(|(i, _, eps)| eps.mse(&eval_items[*i].seq.tokens).item() as f64)
        .sum::<f64>()
        / draws.len().max(1) as f64;

    let mut metrics = MetricsTable::new(&DIT_METRICS_COLUMNS);
    let mut acc = Accumulator::default();
    for step in 1..=cfg.steps {
        opt.lr = cosine_lr(cfg.lr, step - 1, cfg.steps, LR_FLOOR);
        let batch = batches.next().expect("endless stream");
        let mut total: Option<Tensor<f32>> = None;
        for (clip, plan) in &batch.samples {
            let p = &items[*clip];
            let seq = p.seq.select(&plan.kept);
            let t = cfg.sampler.sample(seq.len(), &mut step_rng);
            let cond = apply_train_conditioning(&seq, t, cfg.p_cond, &mut step_rng)?;
            let eps = Tensor::new(seq.tokens.shape(), step_rng.normal_vec(seq.tokens.numel()));
            let cap = caption_for(&dit, &p.caption)?;
            let l = flow_loss_with(&dit, &seq, &cap, &cond.timesteps, &eps, Some(&cond.loss_mask))?;
            total = Some(match total {
                None => l,
                Some(a) => a.add(&l),
            });
        }
        let loss = total.expect("batch_size > 0").scale(1.0 / cfg.batch_size as f64);
        let value = loss.item() as f64;
        if !value.is_finite() {
            if let Some(d) = out_dir {
                dit_checkpoint(&mut dit, &norm).save(d.join("dit_last_good.ltxk"))?;
            }
            return Err(Error::Numeric(format!("non-finite flow loss at step {step}")));
        }
        loss.backward();
        let gnorm = opt.step(&mut dit);
        acc.add(&[value, gnorm]);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let means = acc.take();
            metrics.push(vec![step as f64, means[0], eval_loss(&dit, &eval_items, &draws)?, zero_baseline, means[1]]);
        }
    }
    if let Some(d) = out_dir {
        dit_checkpoint(&mut dit, &norm).save(d.join("dit.ltxk"))?;
        metrics.save(d.join("dit_metrics.csv"))?;
    }
    Ok(DitTrainOutcome {
        dit,
        norm,
        metrics,
        zero_baseline,
    })
}

/// Flow loss of `dit` on the given draws' clips, for comparisons after training.
pub fn corpus_flow_loss(dit: &Dit<f32>, norm: &LatentNorm, vae: &VideoVae<f32>, corpus: &Corpus, sampler: &TimestepSampler, draws: usize, rng: &Rng) -> Result<f64> {
    let items = prepare(&encode_corpus(vae, corpus)?, corpus, norm, vae)?;
    let mut r = rng.fork(7);
    let d: Vec<(usize, f64, Tensor<f32>)> = (0..draws)
        .map(|k| {
            let i = k % items.len();
            let t = sampler.sample(items[i].seq.len(), &mut r);
            (i, t, Tensor::new(items[i].seq.tokens.shape(), r.normal_vec(items[i].seq.tokens.numel())))
        })
        .collect();
    eval_loss(dit, &items, &d)
}
