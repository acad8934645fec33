use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry of one causal 3D convolution over `[T, H, W, C]` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: (usize, usize, usize),
}

impl Conv3dSpec {
    /// Output `(T, H, W)` for an input `(T, H, W)`.
    pub fn output_dims(&self, t: usize, h: usize, w: usize) -> (usize, usize, usize) {
        let (st, sh, sw) = self.stride;
        ((t - 1) / st + 1, (h - 1) / sh + 1, (w - 1) / sw + 1)
    }

    /// Inclusive range of input frames that output frame `i` reads (before edge
    /// replication clamps negative indices to frame 0).
    pub fn receptive_frames(&self, i: usize) -> (isize, isize) {
        let hi = (i * self.stride.0) as isize;
        (hi - (self.kt as isize - 1), hi)
    }
}

/// Causal 3D convolution.
///
/// `input` is `[T, H, W, Cin]`, `kernel` is `[kt, kh, kw, Cin, Cout]`. Time is
/// padded with `kt - 1` leading copies of frame 0 and nothing trailing, so output
/// frame `i` only reads input frames `<= i * st`. Space is zero padded by
/// `(k - 1) / 2` before and `k - 1 - (k - 1) / 2` after.
pub fn causal_conv3d<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    stride: (usize, usize, usize),
) -> Result<Tensor<S>> {
    if input.rank() != 4 {
        return Err(Error::dim(format!("conv input must be [T,H,W,C], got {:?}", input.shape())));
    }
    if kernel.rank() != 5 {
        return Err(Error::dim(format!(
            "conv kernel must be [kt,kh,kw,Cin,Cout], got {:?}",
            kernel.shape()
        )));
    }
    let ks = kernel.shape();
    let spec = Conv3dSpec {
        kt: ks[0],
        kh: ks[1],
        kw: ks[2],
        cin: ks[3],
        cout: ks[4],
        stride,
    };
    if input.dim(3) != spec.cin {
        return Err(Error::dim(format!(
            "conv input has {} channels, kernel expects {}",
            input.dim(3),
            spec.cin
        )));
    }
    if stride.0 == 0 || stride.1 == 0 || stride.2 == 0 {
        return Err(Error::dim("conv stride must be positive"));
    }
    if let Some(b) = bias {
        if b.numel() != spec.cout {
            return Err(Error::dim(format!("conv bias has {} entries, expected {}", b.numel(), spec.cout)));
        }
    }
    Ok(conv_forward(input, kernel, bias, spec))
}

struct ColMap {
    /// For each (output position, tap): flat input position or `usize::MAX` for zero padding.
    src: Vec<usize>,
    positions: usize,
    taps: usize,
}

fn build_colmap(spec: &Conv3dSpec, t: usize, h: usize, w: usize) -> ColMap {
    let (to, ho, wo) = spec.output_dims(t, h, w);
    let (st, sh, sw) = spec.stride;
    let ph = ((spec.kh - 1) / 2) as isize;
    let pw = ((spec.kw - 1) / 2) as isize;
    let taps = spec.kt * spec.kh * spec.kw;
    let positions = to * ho * wo;
    let mut src = Vec::with_capacity(positions * taps);
    for ot in 0..to {
        for oh in 0..ho {
            for ow in 0..wo {
                for dt in 0..spec.kt {
                    // padded frame index ot*st + dt maps to input ot*st + dt - (kt-1), clamped at 0
                    let ti = (ot * st + dt) as isize - (spec.kt as isize - 1);
                    let ti = ti.max(0) as usize;
                    for dh in 0..spec.kh {
                        let hi = (oh * sh + dh) as isize - ph;
                        for dw in 0..spec.kw {
                            let wi = (ow * sw + dw) as isize - pw;
                            if hi < 0 || wi < 0 || hi >= h as isize || wi >= w as isize {
                                src.push(usize::MAX);
                            } else {
                                src.push((ti * h + hi as usize) * w + wi as usize);
                            }
                        }
                    }
                }
            }
        }
    }
    ColMap { src, positions, taps }
}

fn conv_forward<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    spec: Conv3dSpec,
) -> Tensor<S> {
    let (t, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let (to, ho, wo) = spec.output_dims(t, h, w);
    let cin = spec.cin;
    let cout = spec.cout;
    let map = build_colmap(&spec, t, h, w);
    let row = map.taps * cin;
    let x = input.data();
    let mut cols = vec![S::zero(); map.positions * row];
    for (p, col) in cols.chunks_mut(row).enumerate() {
        for tap in 0..map.taps {
            let s = map.src[p * map.taps + tap];
            if s != usize::MAX {
                col[tap * cin..(tap + 1) * cin].copy_from_slice(&x[s * cin..(s + 1) * cin]);
            }
        }
    }
    let mut out = vec![S::zero(); map.positions * cout];
    if let Some(b) = bias {
        for r in out.chunks_mut(cout) {
            r.copy_from_slice(b.data());
        }
    }
    let beta = if bias.is_some() { S::one() } else { S::zero() };
    S::gemm(
        map.positions,
        row,
        cout,
        S::one(),
        &cols,
        row as isize,
        1,
        kernel.data(),
        cout as isize,
        1,
        beta,
        &mut out,
        cout as isize,
        1,
    );
    let mut parents = vec![input.clone(), kernel.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let in_len = input.numel();
    Tensor::from_op(
        vec![to, ho, wo, cout],
        out,
        parents,
        Box::new(move |g, _, p| {
            let positions = map.positions;
            let gk = p[1].requires_grad().then(|| {
                let mut gk = vec![S::zero(); row * cout];
                S::gemm(
                    row,
                    positions,
                    cout,
                    S::one(),
                    &cols,
                    1,
                    row as isize,
                    g,
                    cout as isize,
                    1,
                    S::zero(),
                    &mut gk,
                    cout as isize,
                    1,
                );
                gk
            });
            let gx = p[0].requires_grad().then(|| {
                let mut gcols = vec![S::zero(); positions * row];
                S::gemm(
                    positions,
                    cout,
                    row,
                    S::one(),
                    g,
                    cout as isize,
                    1,
                    p[1].data(),
                    1,
                    cout as isize,
                    S::zero(),
                    &mut gcols,
                    row as isize,
                    1,
                );
                let mut gx = vec![S::zero(); in_len];
                for (pos, gc) in gcols.chunks(row).enumerate() {
                    for tap in 0..map.taps {
                        let s = map.src[pos * map.taps + tap];
                        if s != usize::MAX {
                            let dst = &mut gx[s * cin..(s + 1) * cin];
                            for (d, &v) in dst.iter_mut().zip(&gc[tap * cin..(tap + 1) * cin]) {
                                *d = *d + v;
                            }
                        }
                    }
                }
                gx
            });
            let mut grads = vec![gx, gk];
            if p.len() == 3 {
                grads.push(p[2].requires_grad().then(|| {
                    let mut gb = vec![S::zero(); cout];
                    for r in g.chunks(cout) {
                        for (a, &b) in gb.iter_mut().zip(r) {
                            *a = *a + b;
                        }
                    }
                    gb
                }));
            }
            grads
        }),
    )
}

/// `x / sqrt(mean(x^2) + eps) * scale` along the last axis.
pub fn rms_normalize<S: Scalar>(x: &Tensor<S>, scale: Option<&Tensor<S>>, eps: f64) -> Result<Tensor<S>> {
    let d = x.dim(x.rank() - 1);
    if let Some(s) = scale {
        if s.numel() != d {
            return Err(Error::dim(format!("rms scale has {} entries, last axis is {d}", s.numel())));
        }
    }
    Ok(x.rms_norm(scale, eps))
}

impl<S: Scalar> Tensor<S> {
    pub fn rms_norm(&self, scale: Option<&Tensor<S>>, eps: f64) -> Tensor<S> {
        let d = self.dim(self.rank() - 1);
        let eps = S::of(eps);
        let x = self.data();
        let ones = vec![S::one(); d];
        let s: &[S] = scale.map(|s| s.data()).unwrap_or(&ones);
        assert_eq!(s.len(), d);
        let inv: Vec<S> = x
            .chunks(d)
            .map(|r| {
                let ms = r.iter().map(|&v| v * v).sum::<S>() / S::of(d as f64);
                S::one() / (ms + eps).sqrt()
            })
            .collect();
        let mut data = Vec::with_capacity(x.len());
        for (r, &iv) in x.chunks(d).zip(&inv) {
            data.extend(r.iter().zip(s).map(|(&v, &sc)| v * iv * sc));
        }
        let mut parents = vec![self.clone()];
        if let Some(sc) = scale {
            parents.push(sc.clone());
        }
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            parents,
            Box::new(move |g, _, p| {
                let x = p[0].data();
                let ones = vec![S::one(); d];
                let s: &[S] = if p.len() > 1 { p[1].data() } else { &ones };
                let dn = S::of(d as f64);
                let mut gx = vec![S::zero(); x.len()];
                let mut gs = vec![S::zero(); d];
                for (((xr, gr), gxr), &iv) in x.chunks(d).zip(g.chunks(d)).zip(gx.chunks_mut(d)).zip(&inv) {
                    let mut dot = S::zero();
                    for j in 0..d {
                        dot = dot + gr[j] * s[j] * xr[j];
                        gs[j] = gs[j] + gr[j] * xr[j] * iv;
                    }
                    let c = iv * iv * iv * dot / dn;
                    for j in 0..d {
                        gxr[j] = iv * gr[j] * s[j] - xr[j] * c;
                    }
                }
                let mut out = vec![Some(gx)];
                if p.len() > 1 {
                    out.push(Some(gs));
                }
                out
            }),
        )
    }

    /// Group normalization for channel-last tensors. Statistics are taken per
    /// index of axis 0 (one frame) and per group of `C / groups` consecutive
    /// channels, so frames never see each other. No affine.
    pub fn group_norm(&self, groups: usize, eps: f64) -> Tensor<S> {
        let c = self.dim(self.rank() - 1);
        assert!(groups > 0 && c % groups == 0, "{c} channels not divisible into {groups} groups");
        let cg = c / groups;
        let frames = self.dim(0);
        let frame_len = self.numel() / frames;
        let n = S::of((frame_len / c * cg) as f64);
        let x = self.data();
        let mut mean = vec![S::zero(); frames * groups];
        let mut inv = vec![S::zero(); frames * groups];
        for (f, fx) in x.chunks(frame_len).enumerate() {
            let m = &mut mean[f * groups..(f + 1) * groups];
            for r in fx.chunks(c) {
                for (gi, chunk) in r.chunks(cg).enumerate() {
                    m[gi] = m[gi] + chunk.iter().copied().sum::<S>();
                }
            }
            m.iter_mut().for_each(|v| *v = *v / n);
            let mut var = vec![S::zero(); groups];
            for r in fx.chunks(c) {
                for (gi, chunk) in r.chunks(cg).enumerate() {
                    var[gi] = var[gi] + chunk.iter().map(|&v| (v - m[gi]) * (v - m[gi])).sum::<S>();
                }
            }
            for gi in 0..groups {
                inv[f * groups + gi] = S::one() / (var[gi] / n + S::of(eps)).sqrt();
            }
        }
        let mut data = vec![S::zero(); x.len()];
        for (f, (fx, fo)) in x.chunks(frame_len).zip(data.chunks_mut(frame_len)).enumerate() {
            for (r, o) in fx.chunks(c).zip(fo.chunks_mut(c)) {
                for j in 0..c {
                    let gi = f * groups + j / cg;
                    o[j] = (r[j] - mean[gi]) * inv[gi];
                }
            }
        }
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, y, _| {
                let mut gx = vec![S::zero(); g.len()];
                for f in 0..frames {
                    let span = f * frame_len..(f + 1) * frame_len;
                    let (gf, yf) = (&g[span.clone()], &y[span.clone()]);
                    let mut sg = vec![S::zero(); groups];
                    let mut sgy = vec![S::zero(); groups];
                    for (gr, yr) in gf.chunks(c).zip(yf.chunks(c)) {
                        for j in 0..c {
                            sg[j / cg] = sg[j / cg] + gr[j];
                            sgy[j / cg] = sgy[j / cg] + gr[j] * yr[j];
                        }
                    }
                    for ((gr, yr), o) in gf.chunks(c).zip(yf.chunks(c)).zip(gx[span].chunks_mut(c)) {
                        for j in 0..c {
                            let gi = j / cg;
                            o[j] = inv[f * groups + gi] * (gr[j] - sg[gi] / n - yr[j] * sgy[gi] / n);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Rotates interleaved component pairs `(2j, 2j+1)` of the last axis by the
    /// angles whose cosines/sines are given. `cos`/`sin` have shape
    /// `[rows, last/2]` where `rows` counts the leading axis only; any axes in
    /// between (e.g. heads) share the same angles.
    pub fn rotate_pairs(&self, cos: &[S], sin: &[S]) -> Tensor<S> {
        let d = self.dim(self.rank() - 1);
        assert!(d % 2 == 0, "rotate_pairs needs an even last axis");
        let half = d / 2;
        let rows = self.dim(0);
        assert_eq!(cos.len(), rows * half);
        assert_eq!(sin.len(), rows * half);
        let per_row = self.numel() / rows;
        let x = self.data();
        let mut data = vec![S::zero(); x.len()];
        let rot = |src: &[S], dst: &mut [S], sign: S| {
            for r in 0..rows {
                let (cr, sr) = (&cos[r * half..(r + 1) * half], &sin[r * half..(r + 1) * half]);
                for (vx, vo) in src[r * per_row..(r + 1) * per_row]
                    .chunks(d)
                    .zip(dst[r * per_row..(r + 1) * per_row].chunks_mut(d))
                {
                    for j in 0..half {
                        let (a, b) = (vx[2 * j], vx[2 * j + 1]);
                        let (c, s) = (cr[j], sign * sr[j]);
                        vo[2 * j] = a * c - b * s;
                        vo[2 * j + 1] = a * s + b * c;
                    }
                }
            }
        };
        rot(x, &mut data, S::one());
        let (cos, sin) = (cos.to_vec(), sin.to_vec());
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![S::zero(); g.len()];
                // inverse rotation is the transpose
                let inv = |src: &[S], dst: &mut [S]| {
                    for r in 0..rows {
                        let (cr, sr) = (&cos[r * half..(r + 1) * half], &sin[r * half..(r + 1) * half]);
                        for (vx, vo) in src[r * per_row..(r + 1) * per_row]
                            .chunks(d)
                            .zip(dst[r * per_row..(r + 1) * per_row].chunks_mut(d))
                        {
                            for j in 0..half {
                                let (a, b) = (vx[2 * j], vx[2 * j + 1]);
                                let (c, s) = (cr[j], -sr[j]);
                                vo[2 * j] = a * c - b * s;
                                vo[2 * j + 1] = a * s + b * c;
                            }
                        }
                    }
                };
                inv(g, &mut gx);
                vec![Some(gx)]
            }),
        )
    }

    pub fn gelu(&self) -> Tensor<S> {
        // tanh approximation, written out so the backward comes for free
        let inner = self.add(&self.square().mul(self).scale(0.044715)).scale((2.0 / std::f64::consts::PI).sqrt());
        self.mul(&inner.tanh().add_scalar(1.0)).scale(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Direct 6-loop (plus channels) convolution with the same padding rules.
    fn naive_conv(x: &[f64], dims: (usize, usize, usize, usize), k: &[f64], ks: [usize; 5], stride: (usize, usize, usize)) -> Vec<f64> {
        let (t, h, w, cin) = dims;
        let [kt, kh, kw, _, cout] = ks;
        let to = (t - 1) / stride.0 + 1;
        let ho = (h - 1) / stride.1 + 1;
        let wo = (w - 1) / stride.2 + 1;
        let ph = (kh as isize - 1) / 2;
        let pw = (kw as isize - 1) / 2;
        let mut out = vec![0.0; to * ho * wo * cout];
        for a in 0..to {
            for b in 0..ho {
                for c in 0..wo {
                    for o in 0..cout {
                        let mut acc = 0.0;
                        for i in 0..kt {
                            for j in 0..kh {
                                for l in 0..kw {
                                    let ti = ((a * stride.0 + i) as isize - (kt as isize - 1)).max(0) as usize;
                                    let hi = (b * stride.1 + j) as isize - ph;
                                    let wi = (c * stride.2 + l) as isize - pw;
                                    if hi < 0 || wi < 0 || hi >= h as isize || wi >= w as isize {
                                        continue;
                                    }
                                    for ci in 0..cin {
                                        let xv = x[((ti * h + hi as usize) * w + wi as usize) * cin + ci];
                                        let kv = k[(((i * kh + j) * kw + l) * cin + ci) * cout + o];
                                        acc += xv * kv;
                                    }
                                }
                            }
                        }
                        out[((a * ho + b) * wo + c) * cout + o] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let mut rng = Rng::seeded(11);
        let x = Tensor::<f32>::randn(&[5, 4, 4, 2], &mut rng);
        let k = Tensor::<f32>::randn(&[3, 3, 3, 2, 3], &mut rng);
        for stride in [(1, 1, 1), (2, 2, 1)] {
            let y = causal_conv3d(&x, &k, None, stride).unwrap();
            let xd: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
            let kd: Vec<f64> = k.data().iter().map(|&v| v as f64).collect();
            let want = naive_conv(&xd, (5, 4, 4, 2), &kd, [3, 3, 3, 2, 3], stride);
            assert_eq!(y.numel(), want.len());
            for (a, b) in y.data().iter().zip(&want) {
                assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = Rng::seeded(2);
        let x = Tensor::<f32>::randn(&[3, 4, 5, 3], &mut rng);
        let mut k = vec![0.0; 9];
        for i in 0..3 {
            k[i * 3 + i] = 1.0;
        }
        let k = Tensor::new(&[1, 1, 1, 3, 3], k);
        let y = causal_conv3d(&x, &k, None, (1, 1, 1)).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn temporal_impulse_stays_causal() {
        let mut x = vec![0.0f32; 6 * 2 * 2];
        x[0] = 1.0; // frame 0, pixel (0,0)
        // frames after 0 are zero, but frame 0 is replicated into the past padding
        let x = Tensor::new(&[6, 2, 2, 1], x);
        let k = Tensor::new(&[3, 1, 1, 1, 1], vec![1.0, 1.0, 1.0]);
        let y = causal_conv3d(&x, &k, None, (1, 1, 1)).unwrap();
        let frame = |i: usize| y.data()[i * 4];
        assert_eq!(frame(0), 3.0);
        assert_eq!(frame(1), 2.0);
        assert_eq!(frame(2), 1.0);
        for i in 3..6 {
            assert_eq!(frame(i), 0.0);
        }
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let x = Tensor::<f32>::zeros(&[2, 2, 2, 3]);
        let k = Tensor::<f32>::zeros(&[1, 1, 1, 2, 1]);
        assert!(matches!(causal_conv3d(&x, &k, None, (1, 1, 1)), Err(Error::Dimension(_))));
    }

    #[test]
    fn rms_constant_and_zero_vectors() {
        let x = Tensor::<f64>::new(&[4], vec![-2.5; 4]);
        let y = rms_normalize(&x, None, 1e-12).unwrap();
        for &v in y.data() {
            assert!((v + 1.0).abs() < 1e-9);
        }
        let z = Tensor::<f64>::zeros(&[4]);
        assert!(rms_normalize(&z, None, 1e-6).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rms_matches_direct_formula() {
        let mut rng = Rng::seeded(5);
        let x = Tensor::<f64>::randn(&[8], &mut rng);
        let s = Tensor::<f64>::randn(&[8], &mut rng);
        let y = rms_normalize(&x, Some(&s), 1e-6).unwrap();
        let ms: f64 = x.data().iter().map(|v| v * v).sum::<f64>() / 8.0;
        for i in 0..8 {
            let want = x.data()[i] / (ms + 1e-6).sqrt() * s.data()[i];
            assert!((y.data()[i] - want).abs() < 1e-6);
        }
        let bad = Tensor::<f64>::zeros(&[3]);
        assert!(rms_normalize(&x, Some(&bad), 1e-6).is_err());
    }
}
