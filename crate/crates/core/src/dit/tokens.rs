use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vae::{LatentTensor, VaeConfig};

/// Flattened latent tokens with their physical coordinates and noise levels.
///
/// `coords` are `(t_sec, x_px, y_px)` patch centers before normalization.
/// `positions` index each token in the full `grid`, so any subset produced
/// by [`TokenSequence::select`] still knows where it came from.
#[derive(Clone, Debug)]
pub struct TokenSequence<S: Scalar = f32> {
    pub tokens: Tensor<S>,
    pub coords: Vec<[f64; 3]>,
    pub timesteps: Vec<f64>,
    pub fps: f64,
    pub grid: [usize; 3],
    pub positions: Vec<usize>,
}

/// Patch-center coordinates of a latent grid in row-major `(t, h, w)` order.
/// Latent frame 0 covers pixel frame 0 alone; frame `j >= 1` covers
/// `temporal_factor` frames starting at `(j-1)*tf + 1`.
pub fn latent_coords(grid: [usize; 3], spatial_factor: usize, temporal_factor: usize, fps: f64) -> Vec<[f64; 3]> {
    let [t, h, w] = grid;
    let (sf, tf) = (spatial_factor as f64, temporal_factor as f64);
    let mut out = Vec::with_capacity(t * h * w);
    for j in 0..t {
        let frame = if j == 0 { 0.0 } else { (j - 1) as f64 * tf + 1.0 + (tf - 1.0) / 2.0 };
        for y in 0..h {
            for x in 0..w {
                out.push([frame / fps, (x as f64 + 0.5) * sf, (y as f64 + 0.5) * sf]);
            }
        }
    }
    out
}

impl<S: Scalar> TokenSequence<S> {
    pub fn new(tokens: Tensor<S>, coords: Vec<[f64; 3]>, timesteps: Vec<f64>, fps: f64, grid: [usize; 3]) -> Result<Self> {
        let n = coords.len();
        if tokens.rank() != 2 || tokens.dim(0) != n || timesteps.len() != n {
            return Err(Error::dim(format!(
                "{:?} tokens with {} coords and {} timesteps",
                tokens.shape(),
                n,
                timesteps.len()
            )));
        }
        if let Some(t) = timesteps.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Domain(format!("token timestep {t} outside [0, 1]")));
        }
        Ok(Self {
            tokens,
            coords,
            timesteps,
            fps,
            grid,
            positions: (0..n).collect(),
        })
    }

    /// All tokens of a latent clip at one shared timestep.
    pub fn from_latent(latent: &LatentTensor<S>, vae: &VaeConfig, t: f64) -> Result<Self> {
        let (lt, lh, lw, c) = latent.dims();
        let grid = [lt, lh, lw];
        let coords = latent_coords(grid, vae.spatial_factor, vae.temporal_factor, latent.fps);
        let n = coords.len();
        Self::new(latent.values.reshape(&[n, c]), coords, vec![t; n], latent.fps, grid)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.tokens.dim(1)
    }

    /// Keeps the tokens at `idx` (in that order) with their coordinates.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            tokens: self.tokens.index_select(idx),
            coords: idx.iter().map(|&i| self.coords[i]).collect(),
            timesteps: idx.iter().map(|&i| self.timesteps[i]).collect(),
            fps: self.fps,
            grid: self.grid,
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
        }
    }

    pub fn with_tokens(&self, tokens: Tensor<S>) -> Self {
        assert_eq!(tokens.dim(0), self.len());
        Self {
            tokens,
            ..self.clone()
        }
    }

    /// Reassembles a full-grid `[N, C]` tensor into a latent clip.
    pub fn to_latent(&self, values: &Tensor<S>) -> Result<LatentTensor<S>> {
        let [t, h, w] = self.grid;
        if values.dim(0) != t * h * w || self.len() != t * h * w {
            return Err(Error::dim("to_latent needs every grid token".to_string()));
        }
        Ok(LatentTensor::new(values.reshape(&[t, h, w, values.dim(1)]), self.fps))
    }
}

/// Caption token features `[M, d_text]` and which positions are real.
#[derive(Clone, Debug)]
pub struct CaptionEmbedding<S: Scalar = f32> {
    pub tokens: Tensor<S>,
    pub mask: Vec<bool>,
}

impl<S: Scalar> CaptionEmbedding<S> {
    pub fn new(tokens: Tensor<S>, mask: Vec<bool>) -> Result<Self> {
        if tokens.rank() != 2 || tokens.dim(0) != mask.len() {
            return Err(Error::dim(format!("caption {:?} with {} mask entries", tokens.shape(), mask.len())));
        }
        Ok(Self { tokens, mask })
    }

    pub fn unmasked(tokens: Tensor<S>) -> Self {
        let m = tokens.dim(0);
        Self {
            tokens,
            mask: vec![true; m],
        }
    }
}
