use std::f64::consts::TAU;

use crate::dit::{latent_coords, Dit, DitConfig, FrequencySpacing, TokenSequence};
use crate::error::{Error, Result};
use crate::flow::{flow_loss_with, TimestepSampler};
use crate::optim::{cosine_lr, Adam};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Toy sequence-denoising task: flow matching on random smooth fields laid
/// out on a latent token grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub dit: DitConfig,
    /// `[T', H', W']` token grid.
    pub grid: [usize; 3],
    /// Latent-to-pixel factors used to place tokens.
    pub spatial_factor: usize,
    pub temporal_factor: usize,
    pub fps: f64,
    /// Cosines summed per channel; wavenumbers are drawn up to `max_wavenumber`.
    pub waves: usize,
    pub max_wavenumber: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub sampler: TimestepSampler,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            dit: DitConfig::desk(),
            grid: [2, 8, 8],
            spatial_factor: 8,
            temporal_factor: 2,
            fps: 24.0,
            waves: 2,
            max_wavenumber: 1,
            steps: 800,
            batch_size: 2,
            lr: 2e-3,
            sampler: TimestepSampler::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationCurve {
    pub spacing: FrequencySpacing,
    pub seed: u64,
    pub losses: Vec<f64>,
}

impl AblationCurve {
    /// Mean loss over the last quarter of the steps.
    pub fn final_quarter_mean(&self) -> f64 {
        let n = self.losses.len();
        let tail = &self.losses[n - (n / 4).max(1)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Mean over the first quarter.
    pub fn first_quarter_mean(&self) -> f64 {
        let n = (self.losses.len() / 4).max(1);
        self.losses[..n].iter().sum::<f64>() / n as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

/// Paired curves, one pair per seed: `(exponential, inverse-exponential)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub pairs: Vec<(AblationCurve, AblationCurve)>,
}

impl AblationReport {
    /// Seeds where exponential spacing has the lower final-quarter loss.
    pub fn exponential_wins(&self) -> usize {
        self.pairs
            .iter()
            .filter(|(e, i)| e.final_quarter_mean() < i.final_quarter_mean())
            .count()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("seed,exponential,inverse_exponential\n");
        for (e, i) in &self.pairs {
            s.push_str(&format!("{},{},{}\n", e.seed, e.final_quarter_mean(), i.final_quarter_mean()));
        }
        s
    }
}

pub fn spacing_name(s: FrequencySpacing) -> &'static str {
    match s {
        FrequencySpacing::Exponential => "exponential",
        FrequencySpacing::InverseExponential => "inverse-exponential",
    }
}

/// One `[N, C]` field: each channel is a unit-variance sum of `waves` random
/// plane cosines over the grid-normalized `(t, y, x)` position.
pub fn smooth_field(cfg: &AblationConfig, rng: &mut Rng) -> Tensor<f32> {
    let [gt, gh, gw] = cfg.grid;
    let c = cfg.dit.latent_channels;
    let n = gt * gh * gw;
    let mut out = vec![0.0f32; n * c];
    let amp = (2.0 / cfg.waves as f64).sqrt();
    for ch in 0..c {
        for _ in 0..cfg.waves {
            let k: Vec<f64> = (0..3)
                .map(|_| rng.below(2 * cfg.max_wavenumber + 1) as f64 - cfg.max_wavenumber as f64)
                .collect();
            let phase = rng.uniform_range(0.0, TAU);
            for (i, v) in out.chunks_mut(c).enumerate() {
                let (t, y, x) = (i / (gh * gw), (i / gw) % gh, i % gw);
                let arg = k[0] * t as f64 / gt as f64 + k[1] * y as f64 / gh as f64 + k[2] * x as f64 / gw as f64;
                v[ch] += (amp * (TAU * arg + phase).cos()) as f32;
            }
        }
    }
    Tensor::new(&[n, c], out)
}

/// Trains one model; everything except the frequency spacing derives from `seed`.
pub fn ablation_run(cfg: &AblationConfig, spacing: FrequencySpacing, seed: u64) -> Result<AblationCurve> {
    if cfg.steps == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("ablation needs steps > 0 and batch_size > 0".into()));
    }
    let root = Rng::seeded(seed);
    let mut dit_cfg = cfg.dit.clone();
    dit_cfg.rope.spacing = spacing;
    let mut model = Dit::<f32>::new(dit_cfg, &mut root.fork(1))?;
    let mut data_rng = root.fork(2);
    let coords = latent_coords(cfg.grid, cfg.spatial_factor, cfg.temporal_factor, cfg.fps);
    let n = coords.len();
    let ids = [1usize];
    let mut opt = Adam::adamw(cfg.lr, 0.0);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        opt.lr = cosine_lr(cfg.lr, step, cfg.steps, 0.1);
        let caption = model.embed_caption(&ids, &[true])?;
        let mut total: Option<Tensor<f32>> = None;
        for _ in 0..cfg.batch_size {
            let field = smooth_field(cfg, &mut data_rng);
            let t = cfg.sampler.sample(n, &mut data_rng);
            let eps = Tensor::new(field.shape(), data_rng.normal_vec(field.numel()));
            let seq = TokenSequence::new(field, coords.clone(), vec![t; n], cfg.fps, cfg.grid)?;
            let l = flow_loss_with(&model, &seq, &caption, &vec![t; n], &eps, None)?;
            total = Some(match total {
                None => l,
                Some(a) => a.add(&l),
            });
        }
        let loss = total.expect("batch_size > 0").scale(1.0 / cfg.batch_size as f64);
        let value = loss.item() as f64;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite ablation loss at step {}", step + 1)));
        }
        loss.backward();
        opt.step(&mut model);
        losses.push(value);
    }
    Ok(AblationCurve { spacing, seed, losses })
}

/// Paired exponential / inverse-exponential runs for each seed.
pub fn rope_ablation(cfg: &AblationConfig, seeds: &[u64]) -> Result<AblationReport> {
    let mut pairs = Vec::new();
    for &seed in seeds {
        let e = ablation_run(cfg, FrequencySpacing::Exponential, seed)?;
        let i = ablation_run(cfg, FrequencySpacing::InverseExponential, seed)?;
        pairs.push((e, i));
    }
    Ok(AblationReport { pairs })
}
