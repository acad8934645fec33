use super::{numel, Tensor};
use crate::scalar::Scalar;

/// Output shape of numpy-style broadcasting, or `None` when incompatible.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` laid out inside `out` coordinates, with 0 on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let oi = i + rank - shape.len();
        strides[oi] = if shape[i] == 1 && out[oi] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Calls `f(out_index, a_index, b_index)` for every output element in row-major order.
fn for_each_broadcast(out: &[usize], a: &[usize], b: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n = numel(out);
    if a == out && b == out {
        (0..n).for_each(|i| f(i, i, i));
        return;
    }
    let na = numel(a);
    let nb = numel(b);
    // suffix broadcasting, e.g. [N, d] with [d]
    if a == out && out.ends_with(b) {
        (0..n).for_each(|i| f(i, i, i % nb));
        return;
    }
    if b == out && out.ends_with(a) {
        (0..n).for_each(|i| f(i, i % na, i));
        return;
    }
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            ia += sa[ax];
            ib += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            ia -= sa[ax] * out[ax];
            ib -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

impl<S: Scalar> Tensor<S> {
    fn binary(
        &self,
        other: &Tensor<S>,
        name: &str,
        fwd: fn(S, S) -> S,
        bwd: fn(S, S, S, S) -> (S, S),
    ) -> Tensor<S> {
        let out_shape = broadcast_shape(self.shape(), other.shape()).unwrap_or_else(|| {
            panic!("{name}: cannot broadcast {:?} with {:?}", self.shape(), other.shape())
        });
        let mut data = vec![S::zero(); numel(&out_shape)];
        let (a, b) = (self.data(), other.data());
        for_each_broadcast(&out_shape, self.shape(), other.shape(), |o, i, j| {
            data[o] = fwd(a[i], b[j]);
        });
        let shape = out_shape.clone();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g, out, p| {
                let (a, b) = (&p[0], &p[1]);
                let mut ga = a.requires_grad().then(|| vec![S::zero(); a.numel()]);
                let mut gb = b.requires_grad().then(|| vec![S::zero(); b.numel()]);
                let (ad, bd) = (a.data(), b.data());
                for_each_broadcast(&shape, a.shape(), b.shape(), |o, i, j| {
                    let (da, db) = bwd(ad[i], bd[j], out[o], g[o]);
                    if let Some(ga) = ga.as_mut() {
                        ga[i] = ga[i] + da;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[j] = gb[j] + db;
                    }
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn add(&self, other: &Tensor<S>) -> Tensor<S> {
        self.binary(other, "add", |a, b| a + b, |_, _, _, g| (g, g))
    }

    pub fn sub(&self, other: &Tensor<S>) -> Tensor<S> {
        self.binary(other, "sub", |a, b| a - b, |_, _, _, g| (g, -g))
    }

    pub fn mul(&self, other: &Tensor<S>) -> Tensor<S> {
        self.binary(other, "mul", |a, b| a * b, |a, b, _, g| (g * b, g * a))
    }

    pub fn div(&self, other: &Tensor<S>) -> Tensor<S> {
        self.binary(other, "div", |a, b| a / b, |_, b, c, g| (g / b, -g * c / b))
    }

    fn unary(&self, fwd: impl Fn(S) -> S, dydx: fn(S, S) -> S) -> Tensor<S> {
        let data: Vec<S> = self.data().iter().map(|&x| fwd(x)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, out, p| {
                let x = p[0].data();
                vec![Some(
                    g.iter()
                        .zip(x)
                        .zip(out)
                        .map(|((&g, &x), &y)| g * dydx(x, y))
                        .collect(),
                )]
            }),
        )
    }

    pub fn neg(&self) -> Tensor<S> {
        self.unary(|x| -x, |_, _| -S::one())
    }

    pub fn exp(&self) -> Tensor<S> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Tensor<S> {
        self.unary(|x| x.ln(), |x, _| S::one() / x)
    }

    pub fn sqrt(&self) -> Tensor<S> {
        self.unary(|x| x.sqrt(), |_, y| S::of(0.5) / y)
    }

    pub fn square(&self) -> Tensor<S> {
        self.unary(|x| x * x, |x, _| S::of(2.0) * x)
    }

    pub fn abs(&self) -> Tensor<S> {
        self.unary(|x| x.abs(), |x, _| x.signum() * if x == S::zero() { S::zero() } else { S::one() })
    }

    pub fn relu(&self) -> Tensor<S> {
        self.unary(
            |x| x.max(S::zero()),
            |x, _| if x > S::zero() { S::one() } else { S::zero() },
        )
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        self.unary(sigmoid, |_, y| y * (S::one() - y))
    }

    pub fn silu(&self) -> Tensor<S> {
        self.unary(
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (S::one() + x * (S::one() - s))
            },
        )
    }

    pub fn tanh(&self) -> Tensor<S> {
        self.unary(|x| x.tanh(), |_, y| S::one() - y * y)
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor<S> {
        let (lo, hi) = (S::of(lo), S::of(hi));
        let data: Vec<S> = self.data().iter().map(|&x| x.max(lo).min(hi)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _, p| {
                vec![Some(
                    g.iter()
                        .zip(p[0].data())
                        .map(|(&g, &x)| if x >= lo && x <= hi { g } else { S::zero() })
                        .collect(),
                )]
            }),
        )
    }

    pub fn scale(&self, c: f64) -> Tensor<S> {
        let c = S::of(c);
        let data: Vec<S> = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(g.iter().map(|&g| g * c).collect())]),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<S> {
        let c = S::of(c);
        let data: Vec<S> = self.data().iter().map(|&x| x + c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, _, _| vec![Some(g.to_vec())]),
        )
    }

    pub fn sum(&self) -> Tensor<S> {
        let s: S = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor<S> {
        let n = self.numel();
        self.sum().scale(1.0 / n as f64)
    }

    /// Sum over one axis; the axis is kept with extent 1.
    pub fn sum_axis(&self, axis: usize) -> Tensor<S> {
        let shape = self.shape();
        assert!(axis < shape.len());
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data();
        let mut data = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for i in 0..inner {
                    data[o * inner + i] = data[o * inner + i] + x[base + i];
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = 1;
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![S::zero(); outer * len * inner];
                for o in 0..outer {
                    for a in 0..len {
                        let base = (o * len + a) * inner;
                        gx[base..base + inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    pub fn mean_axis(&self, axis: usize) -> Tensor<S> {
        let len = self.dim(axis);
        self.sum_axis(axis).scale(1.0 / len as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor<S> {
        assert_eq!(
            numel(shape),
            self.numel(),
            "reshape {:?} -> {shape:?}",
            self.shape()
        );
        Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, _, _| vec![Some(g.to_vec())]),
        )
    }

    /// General axis permutation: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Tensor<S> {
        let shape = self.shape();
        let rank = shape.len();
        assert_eq!(axes.len(), rank);
        let mut in_strides = vec![1; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * shape[i + 1];
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let src_index = permuted_indices(&out_shape, &strides);
        let x = self.data();
        let data: Vec<S> = src_index.iter().map(|&i| x[i]).collect();
        let n = self.numel();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![S::zero(); n];
                for (o, &i) in src_index.iter().enumerate() {
                    gx[i] = g[o];
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Swap the last two axes.
    pub fn transpose_last(&self) -> Tensor<S> {
        let r = self.rank();
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(&axes)
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Tensor<S> {
        let shape = self.shape();
        assert!(start + len <= shape[axis], "narrow out of range");
        let outer: usize = shape[..axis].iter().product();
        let full = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let n = self.numel();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![S::zero(); n];
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    gx[base..base + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }),
        )
    }

    pub fn concat(parts: &[Tensor<S>], axis: usize) -> Tensor<S> {
        assert!(!parts.is_empty());
        let first = parts[0].shape();
        for p in parts {
            assert_eq!(p.rank(), first.len());
            for (i, (&a, &b)) in p.shape().iter().zip(first).enumerate() {
                assert!(i == axis || a == b, "concat: {:?} vs {:?}", p.shape(), first);
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let lens: Vec<usize> = parts.iter().map(|p| p.dim(axis)).collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                data.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut out_shape = first.to_vec();
        out_shape[axis] = total;
        Tensor::from_op(
            out_shape,
            data,
            parts.to_vec(),
            Box::new(move |g, _, p| {
                let mut grads: Vec<Vec<S>> = p.iter().map(|t| Vec::with_capacity(t.numel())).collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (gi, &l) in grads.iter_mut().zip(&lens) {
                        gi.extend_from_slice(&g[off..off + l * inner]);
                        off += l * inner;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        )
    }

    /// Rows of axis 0 picked by `indices` (repeats allowed).
    pub fn index_select(&self, indices: &[usize]) -> Tensor<S> {
        let rows = self.dim(0);
        let inner = self.numel() / rows;
        let x = self.data();
        let mut data = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            assert!(i < rows, "index {i} out of {rows}");
            data.extend_from_slice(&x[i * inner..(i + 1) * inner]);
        }
        let mut out_shape = self.shape().to_vec();
        out_shape[0] = indices.len();
        let idx = indices.to_vec();
        let n = self.numel();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![S::zero(); n];
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..inner {
                        gx[i * inner + c] = gx[i * inner + c] + g[r * inner + c];
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Batched product of the last two axes. `other` is either rank 2 (shared
    /// across the batch) or has the same leading axes as `self`. With
    /// `transpose_rhs`, the last two axes of `other` are read transposed.
    pub fn matmul_ext(&self, other: &Tensor<S>, transpose_rhs: bool) -> Tensor<S> {
        let (ar, br) = (self.rank(), other.rank());
        assert!(ar >= 2 && br >= 2, "matmul needs rank >= 2");
        let (m, k) = (self.dim(ar - 2), self.dim(ar - 1));
        let (bk, n) = if transpose_rhs {
            (other.dim(br - 1), other.dim(br - 2))
        } else {
            (other.dim(br - 2), other.dim(br - 1))
        };
        assert_eq!(k, bk, "matmul inner extent {:?} x {:?}", self.shape(), other.shape());
        let batch: usize = self.shape()[..ar - 2].iter().product();
        let shared = br == 2;
        if !shared {
            assert_eq!(
                &self.shape()[..ar - 2],
                &other.shape()[..br - 2],
                "matmul batch axes differ"
            );
        }
        // element strides of rhs as a k x n matrix
        let (rsb, csb) = if transpose_rhs { (1, k as isize) } else { (n as isize, 1) };
        let mut data = vec![S::zero(); batch * m * n];
        let (a, b) = (self.data(), other.data());
        for bi in 0..batch {
            let bo = if shared { 0 } else { bi * k * n };
            S::gemm(
                m,
                k,
                n,
                S::one(),
                &a[bi * m * k..],
                k as isize,
                1,
                &b[bo..],
                rsb,
                csb,
                S::zero(),
                &mut data[bi * m * n..],
                n as isize,
                1,
            );
        }
        let mut out_shape = self.shape()[..ar - 2].to_vec();
        out_shape.extend([m, n]);
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g, _, p| {
                let (a, b) = (p[0].data(), p[1].data());
                let ga = p[0].requires_grad().then(|| {
                    let mut ga = vec![S::zero(); batch * m * k];
                    for bi in 0..batch {
                        let bo = if shared { 0 } else { bi * k * n };
                        // dA = G B^T  (m x n)(n x k); B^T has strides (csb, rsb)
                        S::gemm(
                            m,
                            n,
                            k,
                            S::one(),
                            &g[bi * m * n..],
                            n as isize,
                            1,
                            &b[bo..],
                            csb,
                            rsb,
                            S::zero(),
                            &mut ga[bi * m * k..],
                            k as isize,
                            1,
                        );
                    }
                    ga
                });
                let gb = p[1].requires_grad().then(|| {
                    let mut gb = vec![S::zero(); p[1].numel()];
                    for bi in 0..batch {
                        let bo = if shared { 0 } else { bi * k * n };
                        // dB (k x n) = A^T G, written through rhs strides
                        S::gemm(
                            k,
                            m,
                            n,
                            S::one(),
                            &a[bi * m * k..],
                            1,
                            k as isize,
                            &g[bi * m * n..],
                            n as isize,
                            1,
                            S::one(),
                            &mut gb[bo..],
                            rsb,
                            csb,
                        );
                    }
                    gb
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn matmul(&self, other: &Tensor<S>) -> Tensor<S> {
        self.matmul_ext(other, false)
    }

    /// `self @ other^T` over the last two axes.
    pub fn matmul_t(&self, other: &Tensor<S>) -> Tensor<S> {
        self.matmul_ext(other, true)
    }

    /// `x @ w + b` over the last axis; `w` is `[in, out]`.
    pub fn linear(&self, w: &Tensor<S>, b: Option<&Tensor<S>>) -> Tensor<S> {
        let k = self.dim(self.rank() - 1);
        let rows = self.numel() / k;
        let y = self.reshape(&[rows, k]).matmul(w);
        let y = match b {
            Some(b) => y.add(b),
            None => y,
        };
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = w.dim(1);
        y.reshape(&shape)
    }

    /// Softmax along the last axis. Entries equal to `-inf` get weight 0.
    pub fn softmax(&self) -> Tensor<S> {
        let len = self.dim(self.rank() - 1);
        let x = self.data();
        let mut data = vec![S::zero(); x.len()];
        for (row, out) in x.chunks(len).zip(data.chunks_mut(len)) {
            let mx = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut total = S::zero();
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - mx).exp();
                total = total + *o;
            }
            for o in out.iter_mut() {
                *o = *o / total;
            }
        }
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, y, _| {
                let mut gx = vec![S::zero(); y.len()];
                for ((gr, yr), out) in g.chunks(len).zip(y.chunks(len)).zip(gx.chunks_mut(len)) {
                    let dot: S = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for ((o, &gi), &yi) in out.iter_mut().zip(gr).zip(yr) {
                        *o = yi * (gi - dot);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    pub fn mse(&self, other: &Tensor<S>) -> Tensor<S> {
        self.sub(other).square().mean()
    }

    pub fn l1(&self, other: &Tensor<S>) -> Tensor<S> {
        self.sub(other).abs().mean()
    }
}

pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn permuted_indices(out_shape: &[usize], strides: &[usize]) -> Vec<usize> {
    let n = numel(out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(src);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}
