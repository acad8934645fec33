use std::fs;
use std::path::{Path, PathBuf};

use vidiff::analysis::{
    decoder_ab_test, gradient_csv, gradient_suite, pca_explained_variance, rope_ablation, spacing_name, write_heatmap,
    AblationConfig, DecoderAbConfig, FlatConfig,
};
use vidiff::dit::FrequencySpacing;
use vidiff::flow::generate;
use vidiff::losses::VaeLossWeights;
use vidiff::tensor::no_grad;
use vidiff::train::scene::caption_ids;
use vidiff::train::{
    eval_psnr, load_dit, load_vae, make_dataset, train_dit, train_vae, CheckpointFile, Corpus, DitTrainConfig,
    RawVideoFile, VaeTrainConfig, DESK_BUCKETS,
};
use vidiff::vae::{LatentTensor, VideoTensor, VideoVae};
use vidiff::{Error, Rng};

use crate::settings::{self as st, DIT_KEYS, GENERATE_KEYS, SAMPLER_KEYS, VAE_KEYS};

/// Usage errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type Out<T = ()> = Result<T, CliError>;

fn usage<T>(r: vidiff::Result<T>) -> Out<T> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

/// Flags shared by every subcommand.
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn load(&self, allowed: &[&str]) -> Out<FlatConfig> {
        match &self.config {
            None => Ok(FlatConfig::default()),
            Some(p) => usage(FlatConfig::load(p, allowed)),
        }
    }

    fn out(&self) -> Out<&Path> {
        self.out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    fn out_dir(&self) -> Out<&Path> {
        let d = self.out()?;
        fs::create_dir_all(d).map_err(|e| Error::Io { path: d.to_path_buf(), source: e })?;
        Ok(d)
    }

    /// `seeds` from the config, else three consecutive seeds from `--seed`.
    fn seeds(&self, cfg: &FlatConfig) -> Out<Vec<u64>> {
        Ok(usage(st::list(cfg, "seeds"))?.unwrap_or_else(|| (self.seed..self.seed + 3).collect()))
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Out {
    fs::write(path, bytes).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

fn checkpoint(path: &Path, what: &str) -> Out<CheckpointFile> {
    if !path.is_file() {
        return Err(CliError::Runtime(Error::Config(format!("missing {what} checkpoint {}", path.display()))));
    }
    Ok(CheckpointFile::load(path)?)
}

/// Clips whose caption contains `pattern`.
fn select(corpus: Corpus, pattern: Option<&str>) -> Out<Corpus> {
    let Some(p) = pattern else { return Ok(corpus) };
    let idx: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.clips[i].caption.contains(p)).collect();
    if idx.is_empty() {
        return Err(CliError::Runtime(Error::Config(format!("no caption matches subset {p:?}"))));
    }
    Ok(corpus.subset(&idx))
}

pub fn make_dataset_cmd(c: &Common) -> Out {
    let cfg = c.load(&st::keys(&[&["clips", "buckets"], VAE_KEYS]))?;
    let n: usize = usage(cfg.get_or("clips", 500))?;
    let buckets = match cfg.raw("buckets") {
        Some(b) => usage(st::buckets(b))?,
        None => DESK_BUCKETS.to_vec(),
    };
    let vae = usage(st::vae_config(&cfg))?;
    let dir = c.out_dir()?;
    let corpus = make_dataset(n, &buckets, &vae, &mut Rng::seeded(c.seed), dir)?;
    println!("wrote {} clips to {}", corpus.len(), dir.display());
    Ok(())
}

const VAE_TRAIN_KEYS: &[&str] = &[
    "data",
    "steps",
    "batch_size",
    "lr",
    "disc_lr",
    "disc_width",
    "gan_start",
    "gan_ramp",
    "t_max",
    "w_mse",
    "w_dwt",
    "w_kl",
    "w_gan",
    "eval_every",
    "checkpoint_every",
    "max_eval_clips",
];

pub fn vae_train_cmd(c: &Common, subset: Option<&str>) -> Out {
    let cfg = c.load(&st::keys(&[VAE_TRAIN_KEYS, VAE_KEYS]))?;
    let d = VaeTrainConfig::default();
    let w = VaeLossWeights::desk();
    let tc = usage((|| {
        Ok(VaeTrainConfig {
            vae: st::vae_config(&cfg)?,
            weights: VaeLossWeights {
                w_mse: cfg.get_or("w_mse", w.w_mse)?,
                w_dwt: cfg.get_or("w_dwt", w.w_dwt)?,
                w_kl: cfg.get_or("w_kl", w.w_kl)?,
                w_gan: cfg.get_or("w_gan", w.w_gan)?,
            },
            steps: cfg.get_or("steps", d.steps)?,
            batch_size: cfg.get_or("batch_size", d.batch_size)?,
            lr: cfg.get_or("lr", d.lr)?,
            disc_lr: cfg.get_or("disc_lr", d.disc_lr)?,
            disc_width: cfg.get_or("disc_width", d.disc_width)?,
            gan_start: cfg.get_or("gan_start", d.gan_start)?,
            gan_ramp: cfg.get_or("gan_ramp", d.gan_ramp)?,
            t_max: cfg.get_or("t_max", d.t_max)?,
            eval_every: cfg.get_or("eval_every", d.eval_every)?,
            checkpoint_every: cfg.get("checkpoint_every")?,
            max_eval_clips: cfg.get_or("max_eval_clips", d.max_eval_clips)?,
        })
    })())?;
    let data = usage(st::path(&cfg, "data"))?;
    let corpus = select(Corpus::load(&data)?, subset)?;
    let dir = c.out_dir()?;
    let out = train_vae(&corpus.train(), &corpus.eval(), &tc, &Rng::seeded(c.seed), Some(dir))?;
    if let Some(p) = out.metrics.column("eval_psnr").and_then(|v| v.last().copied()) {
        println!("final eval psnr {p:.3} dB");
    }
    Ok(())
}

pub fn vae_eval_cmd(c: &Common, subset: Option<&str>) -> Out {
    let cfg = c.load(&st::keys(&[&["data", "vae", "split"], VAE_KEYS]))?;
    let vcfg = usage(st::vae_config(&cfg))?;
    let data = usage(st::path(&cfg, "data"))?;
    let ckpt = usage(st::path(&cfg, "vae"))?;
    let split: String = usage(cfg.get_or("split", "eval".to_string()))?;
    let out = c.out()?.to_path_buf();
    let corpus = select(Corpus::load(&data)?, subset)?;
    let corpus = match split.as_str() {
        "eval" => corpus.eval(),
        "train" => corpus.train(),
        "all" => corpus,
        s => return Err(CliError::Usage(format!("split {s:?}; expected eval, train or all"))),
    };
    let vae = load_vae(&checkpoint(&ckpt, "vae")?, &vcfg)?;
    let mut rng = Rng::seeded(c.seed);
    let mut csv = String::from("clip,psnr\n");
    for i in 0..corpus.len() {
        let p = eval_psnr(&vae, &corpus.subset(&[i]), &mut rng)?;
        csv.push_str(&format!("{},{}\n", corpus.clips[i].name, p));
    }
    write(&out, csv)?;
    println!("mean psnr {:.3} dB over {} clips", eval_psnr(&vae, &corpus, &mut rng)?, corpus.len());
    Ok(())
}

const DIT_TRAIN_KEYS: &[&str] = &[
    "data",
    "vae",
    "steps",
    "batch_size",
    "lr",
    "weight_decay",
    "p_cond",
    "target_tokens",
    "eval_every",
    "eval_draws",
    "shuffle_captions",
];

pub fn dit_train_cmd(c: &Common, subset: Option<&str>) -> Out {
    let cfg = c.load(&st::keys(&[DIT_TRAIN_KEYS, VAE_KEYS, DIT_KEYS, SAMPLER_KEYS]))?;
    let d = DitTrainConfig::default();
    let (vcfg, tc) = usage((|| {
        let vcfg = st::vae_config(&cfg)?;
        let tc = DitTrainConfig {
            dit: st::dit_config(&cfg, vcfg.latent_channels)?,
            sampler: st::sampler(&cfg)?,
            steps: cfg.get_or("steps", d.steps)?,
            batch_size: cfg.get_or("batch_size", d.batch_size)?,
            lr: cfg.get_or("lr", d.lr)?,
            weight_decay: cfg.get_or("weight_decay", d.weight_decay)?,
            p_cond: cfg.get_or("p_cond", d.p_cond)?,
            target_tokens: cfg.get_or("target_tokens", d.target_tokens)?,
            eval_every: cfg.get_or("eval_every", d.eval_every)?,
            eval_draws: cfg.get_or("eval_draws", d.eval_draws)?,
            shuffle_captions: cfg.get_or("shuffle_captions", d.shuffle_captions)?,
        };
        Ok((vcfg, tc))
    })())?;
    let data = usage(st::path(&cfg, "data"))?;
    let ckpt = usage(st::path(&cfg, "vae"))?;
    let dir = c.out_dir()?;
    let vae = load_vae(&checkpoint(&ckpt, "vae")?, &vcfg)?;
    let corpus = select(Corpus::load(&data)?, subset)?;
    let out = train_dit(&corpus.train(), &corpus.eval(), &vae, &tc, &Rng::seeded(c.seed), Some(dir))?;
    if let Some(l) = out.metrics.column("eval_flow_loss").and_then(|v| v.last().copied()) {
        println!("final eval flow loss {l:.4} (zero-model baseline {:.4})", out.zero_baseline);
    }
    Ok(())
}

struct Models {
    vae: VideoVae<f32>,
    dit: vidiff::Dit32,
    norm: vidiff::flow::LatentNorm,
}

fn load_models(cfg: &FlatConfig) -> Out<Models> {
    let (vcfg, dcfg) = usage((|| {
        let v = st::vae_config(cfg)?;
        let d = st::dit_config(cfg, v.latent_channels)?;
        Ok((v, d))
    })())?;
    let vae_path = usage(st::path(cfg, "vae"))?;
    let dit_path = usage(st::path(cfg, "dit"))?;
    let vae = load_vae(&checkpoint(&vae_path, "vae")?, &vcfg)?;
    let (dit, norm) = load_dit(&checkpoint(&dit_path, "dit")?, &dcfg)?;
    Ok(Models { vae, dit, norm })
}

pub fn generate_cmd(c: &Common) -> Out {
    let cfg = c.load(&st::keys(&[&["vae", "dit", "prompt", "image"], GENERATE_KEYS, VAE_KEYS, DIT_KEYS, SAMPLER_KEYS]))?;
    let gcfg = usage(st::generate_config(&cfg))?;
    let (shape, fps) = usage(st::shape(&cfg))?;
    let prompt: String = usage(cfg.require("prompt"))?;
    let ids = usage(caption_ids(&prompt))?;
    let image: Option<String> = usage(cfg.get("image"))?;
    let out = c.out()?.to_path_buf();
    let m = load_models(&cfg)?;
    let first = match &image {
        None => None,
        Some(p) => {
            let v = RawVideoFile::load(p)?.video::<f32>()?;
            Some(VideoTensor::new(v.pixels.narrow(0, 0, 1), v.fps)?)
        }
    };
    let caption = m.dit.embed_caption(&ids, &vec![true; ids.len()])?;
    let mut rng = Rng::seeded(c.seed);
    let video = generate(&m.dit, &m.vae, &m.norm, &caption, shape, fps, &gcfg, &mut rng, first.as_ref())?.clamped();
    RawVideoFile::from_video(&video).save(&out)?;

    let mut side = FlatConfig::default();
    side.set("seed", c.seed);
    side.set("steps", gcfg.steps);
    side.set("prompt", &prompt);
    side.set("t_final", gcfg.t_final);
    side.set("decoder_t", gcfg.decoder_t());
    side.set("tail_steps", gcfg.tail_steps);
    side.set("t_c", gcfg.t_c);
    side.set("shape", format!("{}x{}x{}", shape.0, shape.1, shape.2));
    side.set("fps", fps);
    if let Some(p) = &image {
        side.set("image", p);
    }
    write(&manifest_path(&out), side.to_string())?;
    Ok(())
}

/// `a.rvid` gets `a.rvid.manifest`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn rvid_files(dir: &Path) -> Out<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rvid"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Runtime(Error::Config(format!("no .rvid files in {}", dir.display()))));
    }
    Ok(files)
}

/// Files are latents, or pixel clips encoded through `vae` when it is set.
pub fn analyze_latents_cmd(c: &Common, dir: &Path) -> Out {
    let cfg = c.load(&st::keys(&[&["vae", "heatmap"], VAE_KEYS]))?;
    let vcfg = usage(st::vae_config(&cfg))?;
    let ckpt: Option<String> = usage(cfg.get("vae"))?;
    let heatmap: Option<String> = usage(cfg.get("heatmap"))?;
    let out = c.out()?.to_path_buf();
    let files = rvid_files(dir)?;
    let latents: Vec<LatentTensor<f32>> = match ckpt {
        None => files.iter().map(|p| Ok(RawVideoFile::load(p)?.latent())).collect::<Out<_>>()?,
        Some(ck) => {
            let vae = load_vae(&checkpoint(Path::new(&ck), "vae")?, &vcfg)?;
            no_grad(|| {
                files
                    .iter()
                    .map(|p| Ok(vae.encode(&RawVideoFile::load(p)?.video::<f32>()?)?.mode()))
                    .collect::<Out<_>>()
            })?
        }
    };
    let report = pca_explained_variance(&latents)?;
    write(&out, report.to_csv())?;
    if let Some(h) = heatmap {
        write_heatmap(&h, &report.correlation, report.channels, report.channels, -1.0, 1.0)?;
    }
    println!("{} latents, {} observations, auc {:.6}", latents.len(), report.observations, report.auc());
    Ok(())
}

const ABLATION_KEYS: &[&str] = &[
    "seeds",
    "steps",
    "lr",
    "batch_size",
    "grid",
    "waves",
    "max_wavenumber",
    "channels",
    "spatial_factor",
    "temporal_factor",
    "fps",
];

pub fn rope_ablation_cmd(c: &Common) -> Out {
    let cfg = c.load(&st::keys(&[ABLATION_KEYS, DIT_KEYS, SAMPLER_KEYS]))?;
    let d = AblationConfig::default();
    let ac = usage((|| {
        let grid = match st::list::<usize>(&cfg, "grid")? {
            None => d.grid,
            Some(g) => g.try_into().map_err(|_| Error::Config("grid takes three sizes T,H,W".into()))?,
        };
        Ok(AblationConfig {
            dit: st::dit_config(&cfg, cfg.get_or("channels", d.dit.latent_channels)?)?,
            grid,
            spatial_factor: cfg.get_or("spatial_factor", d.spatial_factor)?,
            temporal_factor: cfg.get_or("temporal_factor", d.temporal_factor)?,
            fps: cfg.get_or("fps", d.fps)?,
            waves: cfg.get_or("waves", d.waves)?,
            max_wavenumber: cfg.get_or("max_wavenumber", d.max_wavenumber)?,
            steps: cfg.get_or("steps", d.steps)?,
            batch_size: cfg.get_or("batch_size", d.batch_size)?,
            lr: cfg.get_or("lr", d.lr)?,
            sampler: st::sampler(&cfg)?,
        })
    })())?;
    let seeds = c.seeds(&cfg)?;
    let dir = c.out_dir()?;
    let report = rope_ablation(&ac, &seeds)?;
    for (e, i) in &report.pairs {
        for curve in [e, i] {
            let name = format!("{}_seed{}.csv", spacing_name(curve.spacing), curve.seed);
            write(&dir.join(name), curve.to_csv())?;
        }
    }
    write(&dir.join("summary.csv"), report.summary_csv())?;
    println!(
        "{} wins in {}/{} seeds",
        spacing_name(FrequencySpacing::Exponential),
        report.exponential_wins(),
        report.pairs.len()
    );
    Ok(())
}

pub fn decoder_ab_cmd(c: &Common) -> Out {
    let cfg = c.load(&st::keys(&[&["vae", "dit", "prompts", "seeds"], GENERATE_KEYS, VAE_KEYS, DIT_KEYS, SAMPLER_KEYS]))?;
    let base = usage(st::generate_config(&cfg))?;
    let (shape, fps) = usage(st::shape(&cfg))?;
    let ab = DecoderAbConfig {
        tail_steps: if base.tail_steps > 0 { base.tail_steps } else { DecoderAbConfig::default().tail_steps },
        base,
        shape,
        fps,
    };
    let text: String = usage(cfg.require("prompts"))?;
    let prompts = text
        .split(';')
        .map(|p| Ok((p.trim().to_string(), usage(caption_ids(p.trim()))?)))
        .collect::<Out<Vec<_>>>()?;
    let seeds = c.seeds(&cfg)?;
    let dir = c.out_dir()?;
    let m = load_models(&cfg)?;
    let report = decoder_ab_test(&m.dit, &m.norm, &m.vae, &prompts, &seeds, &ab)?;
    for (k, r) in report.rows.iter().enumerate() {
        RawVideoFile::from_video(&r.a).save(dir.join(format!("pair{k:03}_seed{}_a.rvid", r.seed)))?;
        RawVideoFile::from_video(&r.b).save(dir.join(format!("pair{k:03}_seed{}_b.rvid", r.seed)))?;
    }
    write(&dir.join("decoder_ab.csv"), report.to_csv())?;
    println!("variant a has at least the detail energy of b in {}/{} pairs", report.a_at_least_b(), report.rows.len());
    Ok(())
}

pub fn grad_check_cmd(c: &Common) -> Out {
    let cfg = c.load(&["seeds"])?;
    let seeds = c.seeds(&cfg)?;
    let results = gradient_suite(&seeds)?;
    let csv = gradient_csv(&results);
    match &c.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed()).collect();
    for r in &failed {
        eprintln!("FAIL {} seed {}: max relative error {:e}", r.name, r.seed, r.max_rel_error);
    }
    if !failed.is_empty() {
        return Err(CliError::Runtime(Error::Numeric(format!("{} of {} gradient checks failed", failed.len(), results.len()))));
    }
    println!("{} gradient checks passed", results.len());
    Ok(())
}
