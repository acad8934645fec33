use std::path::Path;

use super::formats::{read_manifest, write_manifest, RawVideoFile};
use super::scene::{caption_text, parse_caption, SceneSpec};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vae::{VaeConfig, VideoTensor};

pub const MANIFEST_NAME: &str = "captions.tsv";
/// One clip in this many goes to the eval split.
pub const EVAL_MODULUS: u64 = 10;

/// A resolution-duration combination in pixels. `frames == 1` is an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bucket {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Bucket {
    pub const fn new(frames: usize, height: usize, width: usize) -> Self {
        Self { frames, height, width }
    }

    /// Latent token count; errors if the VAE cannot encode this size.
    pub fn tokens(&self, vae: &VaeConfig) -> Result<usize> {
        vae.token_count(self.frames, self.height, self.width)
    }

    pub fn is_image(&self) -> bool {
        self.frames == 1
    }
}

/// Video 9x32x32 (80 tokens), video 5x40x40 (75) and image 64x64 (64)
/// under the desk VAE.
pub const DESK_BUCKETS: [Bucket; 3] = [Bucket::new(9, 32, 32), Bucket::new(5, 40, 40), Bucket::new(1, 64, 64)];

#[derive(Clone, Debug)]
pub struct Clip {
    pub name: String,
    pub caption: String,
    pub spec: SceneSpec,
    pub video: VideoTensor<f32>,
}

impl Clip {
    pub fn bucket(&self) -> Bucket {
        Bucket::new(self.video.frames(), self.video.height(), self.video.width())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub clips: Vec<Clip>,
}

/// FNV-1a; stable across runs and platforms.
pub fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn is_eval_name(name: &str) -> bool {
    name_hash(name) % EVAL_MODULUS == 0
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// `(train, eval)` index lists.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.len()).partition(|&i| !is_eval_name(&self.clips[i].name))
    }

    pub fn subset(&self, idx: &[usize]) -> Corpus {
        Corpus {
            clips: idx.iter().map(|&i| self.clips[i].clone()).collect(),
        }
    }

    pub fn train(&self) -> Corpus {
        self.subset(&self.split().0)
    }

    pub fn eval(&self) -> Corpus {
        self.subset(&self.split().1)
    }

    /// Clips in one bucket.
    pub fn in_bucket(&self, b: Bucket) -> Corpus {
        Corpus {
            clips: self.clips.iter().filter(|c| c.bucket() == b).cloned().collect(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut rows = Vec::with_capacity(self.len());
        for c in &self.clips {
            RawVideoFile::from_video(&c.video).save(dir.join(&c.name))?;
            rows.push((c.name.clone(), c.caption.clone()));
        }
        write_manifest(dir.join(MANIFEST_NAME), &rows)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let rows = read_manifest(dir.join(MANIFEST_NAME))?;
        let mut clips = Vec::with_capacity(rows.len());
        for (name, caption) in rows {
            let video = RawVideoFile::load(dir.join(&name))?.video()?;
            let spec = parse_caption(&caption)?;
            clips.push(Clip { name, caption, spec, video });
        }
        Ok(Self { clips })
    }
}

/// `n` random clips cycling through `buckets`. Deterministic per `rng` state.
pub fn generate_corpus(n: usize, buckets: &[Bucket], vae: &VaeConfig, rng: &mut Rng) -> Result<Corpus> {
    if buckets.is_empty() {
        return Err(Error::Config("no resolution buckets".into()));
    }
    for b in buckets {
        b.tokens(vae)?;
    }
    let mut clips = Vec::with_capacity(n);
    for i in 0..n {
        let b = buckets[i % buckets.len()];
        let spec = SceneSpec::random(rng);
        let video = spec.render(b.frames, b.height, b.width)?;
        clips.push(Clip {
            name: format!("clip_{i:05}.rvid"),
            caption: caption_text(&spec),
            spec,
            video,
        });
    }
    Ok(Corpus { clips })
}

/// Generates a corpus and writes its clip files and caption manifest.
pub fn make_dataset(n: usize, buckets: &[Bucket], vae: &VaeConfig, rng: &mut Rng, out_dir: impl AsRef<Path>) -> Result<Corpus> {
    let corpus = generate_corpus(n, buckets, vae, rng)?;
    corpus.save(out_dir)?;
    Ok(corpus)
}
