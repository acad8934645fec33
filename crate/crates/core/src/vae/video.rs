use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Pixel clip `[T, H, W, 3]` with nominal values in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct VideoTensor<S: Scalar = f32> {
    pub pixels: Tensor<S>,
    pub fps: f64,
}

impl<S: Scalar> VideoTensor<S> {
    pub fn new(pixels: Tensor<S>, fps: f64) -> Result<Self> {
        if pixels.rank() != 4 || pixels.dim(3) != 3 {
            return Err(Error::dim(format!("video must be [T,H,W,3], got {:?}", pixels.shape())));
        }
        Ok(Self { pixels, fps })
    }

    pub fn frames(&self) -> usize {
        self.pixels.dim(0)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim(1)
    }

    pub fn width(&self) -> usize {
        self.pixels.dim(2)
    }

    /// Frame `i` as `[1, H, W, 3]`.
    pub fn frame(&self, i: usize) -> Tensor<S> {
        self.pixels.narrow(0, i, 1)
    }

    /// Values clamped to `[0, 1]`, as for display or storage.
    pub fn clamped(&self) -> Self {
        let data = self
            .pixels
            .data()
            .iter()
            .map(|v| v.max(S::zero()).min(S::one()))
            .collect();
        Self {
            pixels: Tensor::new(self.pixels.shape(), data),
            fps: self.fps,
        }
    }
}

/// Latent clip `[T', H', W', C]` and the fps of the clip it came from.
#[derive(Clone, Debug)]
pub struct LatentTensor<S: Scalar = f32> {
    pub values: Tensor<S>,
    pub fps: f64,
}

impl<S: Scalar> LatentTensor<S> {
    pub fn new(values: Tensor<S>, fps: f64) -> Self {
        assert_eq!(values.rank(), 4, "latent must be [T,H,W,C]");
        Self { values, fps }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.values.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn channels(&self) -> usize {
        self.values.dim(3)
    }

    pub fn tokens(&self) -> usize {
        let (t, h, w, _) = self.dims();
        t * h * w
    }
}

/// Space(-time)-to-depth. `[T, H, W, c]` becomes
/// `[1 + (T-1)/pt, H/ps, W/ps, pt*ps*ps*c]`. The first frame forms its own
/// temporal patch, filled by repeating it `pt` times.
pub fn patchify<S: Scalar>(x: &Tensor<S>, ps: usize, pt: usize) -> Result<Tensor<S>> {
    if x.rank() != 4 {
        return Err(Error::dim(format!("patchify needs [T,H,W,C], got {:?}", x.shape())));
    }
    let (t, h, w, c) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    if ps == 0 || pt == 0 || h % ps != 0 || w % ps != 0 || (t - 1) % pt != 0 {
        return Err(Error::dim(format!(
            "clip {t}x{h}x{w} not patchable by spatial {ps} / temporal {pt}"
        )));
    }
    let padded = if pt > 1 {
        let mut parts = vec![x.narrow(0, 0, 1); pt - 1];
        parts.push(x.clone());
        Tensor::concat(&parts, 0)
    } else {
        x.clone()
    };
    let tp = (t - 1) / pt + 1;
    let (hp, wp) = (h / ps, w / ps);
    Ok(padded
        .reshape(&[tp, pt, hp, ps, wp, ps, c])
        .permute(&[0, 2, 4, 1, 3, 5, 6])
        .reshape(&[tp, hp, wp, pt * ps * ps * c]))
}

/// Inverse of [`patchify`] for `c` output channels.
pub fn unpatchify<S: Scalar>(x: &Tensor<S>, ps: usize, pt: usize, c: usize) -> Result<Tensor<S>> {
    if x.rank() != 4 || x.dim(3) != pt * ps * ps * c {
        return Err(Error::dim(format!(
            "unpatchify of {:?} by ({ps},{pt}) into {c} channels",
            x.shape()
        )));
    }
    let (tp, hp, wp) = (x.dim(0), x.dim(1), x.dim(2));
    let y = x
        .reshape(&[tp, hp, wp, pt, ps, ps, c])
        .permute(&[0, 3, 1, 4, 2, 5, 6])
        .reshape(&[tp * pt, hp * ps, wp * ps, c]);
    Ok(if pt > 1 { y.narrow(0, pt - 1, tp * pt - (pt - 1)) } else { y })
}

/// Depth-to-space for decoder upsampling: `[T, H, W, ut*us*us*c]` to
/// `[T*ut - (ut-1), H*us, W*us, c]`; the leading `ut - 1` frames are dropped
/// so the first latent frame yields exactly one pixel-side frame.
pub(crate) fn depth_to_space<S: Scalar>(x: &Tensor<S>, ut: usize, us: usize) -> Tensor<S> {
    let (t, h, w, cc) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let c = cc / (ut * us * us);
    unpatchify(x, us, ut, c).unwrap_or_else(|_| panic!("depth_to_space of {t}x{h}x{w}x{cc}"))
}
