use crate::error::{Error, Result};
use crate::layers::{join, CausalConv3d, Module};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vae::patchify;

/// An (A, B) pair for the reconstruction discriminator.
#[derive(Clone, Debug)]
pub struct DiscriminatorBatch<S: Scalar = f32> {
    pub a: Tensor<S>,
    pub b: Tensor<S>,
    /// True when `a` is the original clip.
    pub a_is_original: bool,
}

impl<S: Scalar> DiscriminatorBatch<S> {
    /// Presents `(original, reconstruction)` in a uniformly random order.
    pub fn shuffled(original: &Tensor<S>, reconstruction: &Tensor<S>, rng: &mut Rng) -> Self {
        let a_is_original = rng.bernoulli(0.5);
        let (a, b) = if a_is_original {
            (original.clone(), reconstruction.clone())
        } else {
            (reconstruction.clone(), original.clone())
        };
        Self { a, b, a_is_original }
    }

    /// `+1` when A is the original, `-1` otherwise.
    pub fn label(&self) -> f64 {
        if self.a_is_original {
            1.0
        } else {
            -1.0
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
            a_is_original: !self.a_is_original,
        }
    }
}

pub const LOGIT_BOUND: f64 = 2.0;

/// Patch classifier over channel-concatenated clip pairs `[T, H, W, 6]`.
///
/// The logit is `b * tanh((g(A|B) - g(B|A)) / b)` with `b = LOGIT_BOUND`, so
/// it is exactly antisymmetric under swapping the pair, exactly zero when
/// `A == B`, and bounded so the generator cannot chase unbounded scores.
#[derive(Clone, Debug)]
pub struct RganDiscriminator<S: Scalar = f32> {
    conv1: CausalConv3d<S>,
    conv2: CausalConv3d<S>,
    head: CausalConv3d<S>,
    patch: usize,
}

impl<S: Scalar> RganDiscriminator<S> {
    pub fn new(width: usize, rng: &mut Rng) -> Self {
        let patch = 4;
        Self {
            conv1: CausalConv3d::new((3, 3, 3), 6 * patch * patch, width, (1, 1, 1), rng),
            conv2: CausalConv3d::new((3, 3, 3), width, width, (2, 2, 2), rng),
            head: CausalConv3d::new((1, 1, 1), width, 1, (1, 1, 1), rng),
            patch,
        }
    }

    fn score(&self, pair: &Tensor<S>) -> Result<Tensor<S>> {
        let h = patchify(pair, self.patch, 1)?;
        let h = self.conv1.forward(&h).silu();
        let h = self.conv2.forward(&h).silu();
        Ok(self.head.forward(&h).mean())
    }

    /// Positive logit means "A is the original".
    pub fn logit(&self, batch: &DiscriminatorBatch<S>) -> Result<Tensor<S>> {
        let (a, b) = (&batch.a, &batch.b);
        if a.shape() != b.shape() || a.rank() != 4 || a.dim(3) != 3 {
            return Err(Error::dim(format!("discriminator pair {:?} / {:?}", a.shape(), b.shape())));
        }
        let ab = Tensor::concat(&[a.clone(), b.clone()], 3);
        let ba = Tensor::concat(&[b.clone(), a.clone()], 3);
        let raw = self.score(&ab)?.sub(&self.score(&ba)?);
        Ok(raw.scale(1.0 / LOGIT_BOUND).tanh().scale(LOGIT_BOUND))
    }
}

impl<S: Scalar> Module<S> for RganDiscriminator<S> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.head.visit(&join(prefix, "head"), f);
    }
}

/// Functional form of the discriminator.
pub fn rgan_discriminator<S: Scalar>(batch: &DiscriminatorBatch<S>, params: &RganDiscriminator<S>) -> Result<Tensor<S>> {
    params.logit(batch)
}

/// Per-sample hinge loss of the discriminator on one presented pair:
/// `relu(1 - s_correct) + relu(1 + s_wrong)`, where `s_correct` is the logit
/// signed towards the true answer and `s_wrong` the logit of the opposite
/// ordering.
pub fn discriminator_hinge<S: Scalar>(batch: &DiscriminatorBatch<S>, disc: &RganDiscriminator<S>) -> Result<(Tensor<S>, bool)> {
    let s = disc.logit(batch)?;
    let s_correct = s.scale(batch.label());
    let correct = s_correct.item() > S::zero();
    let s_wrong = s_correct.neg();
    let loss = s_correct.neg().add_scalar(1.0).relu().add(&s_wrong.add_scalar(1.0).relu());
    Ok((loss, correct))
}

#[derive(Clone, Debug)]
pub struct RganLosses<S: Scalar = f32> {
    /// Discriminator loss; the reconstructions are detached.
    pub d_loss: Tensor<S>,
    /// Generator loss, with the discriminator frozen.
    pub g_loss: Tensor<S>,
    /// Fraction of pairs the discriminator labelled correctly.
    pub accuracy: f64,
}

/// Hinge Reconstruction-GAN losses over a batch of (original, reconstruction) clips.
pub fn rgan_losses<S: Scalar>(
    originals: &[Tensor<S>],
    reconstructions: &[Tensor<S>],
    disc: &RganDiscriminator<S>,
    rng: &mut Rng,
) -> Result<RganLosses<S>> {
    if originals.len() != reconstructions.len() || originals.is_empty() {
        return Err(Error::dim("rgan_losses needs equally many originals and reconstructions"));
    }
    let mut frozen = disc.clone();
    frozen.freeze();
    let n = originals.len() as f64;
    let mut d_terms = Vec::new();
    let mut g_terms = Vec::new();
    let mut correct = 0usize;
    for (x, r) in originals.iter().zip(reconstructions) {
        let batch = DiscriminatorBatch::shuffled(x, &r.detach(), rng);
        let (d, ok) = discriminator_hinge(&batch, disc)?;
        correct += ok as usize;
        d_terms.push(d);
        // generator wants the reconstruction judged "original"
        let fool = DiscriminatorBatch {
            a: r.clone(),
            b: x.clone(),
            a_is_original: false,
        };
        g_terms.push(frozen.logit(&fool)?.neg());
    }
    let sum = |v: Vec<Tensor<S>>| v.iter().skip(1).fold(v[0].clone(), |acc, t| acc.add(t));
    Ok(RganLosses {
        d_loss: sum(d_terms).scale(1.0 / n),
        g_loss: sum(g_terms).scale(1.0 / n),
        accuracy: correct as f64 / n,
    })
}
