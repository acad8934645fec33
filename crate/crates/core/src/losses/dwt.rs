use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const SUBBAND_LABELS: [&str; 8] = ["LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"];

/// Single-level orthonormal 3D Haar analysis of a `[T, H, W, C]` tensor.
/// Band `i` has label `SUBBAND_LABELS[i]`, letters in (t, h, w) order.
#[derive(Clone, Debug)]
pub struct DwtSubbands<S: Scalar = f32> {
    pub bands: Vec<Tensor<S>>,
    /// Which of (t, h, w) were odd and got one edge-replicated sample appended.
    pub padded: [bool; 3],
}

impl<S: Scalar> DwtSubbands<S> {
    pub fn band(&self, label: &str) -> Option<&Tensor<S>> {
        SUBBAND_LABELS.iter().position(|&l| l == label).map(|i| &self.bands[i])
    }

    pub fn energy(&self) -> f64 {
        self.bands
            .iter()
            .flat_map(|b| b.data().iter())
            .map(|v| v.to_f64().unwrap().powi(2))
            .sum()
    }

    /// Energy of the 7 bands with at least one high-pass letter.
    pub fn detail_energy(&self) -> f64 {
        self.bands[1..]
            .iter()
            .flat_map(|b| b.data().iter())
            .map(|v| v.to_f64().unwrap().powi(2))
            .sum()
    }
}

/// Pads `axis` to even length by repeating the last sample.
fn pad_even<S: Scalar>(x: &Tensor<S>, axis: usize) -> (Tensor<S>, bool) {
    let n = x.dim(axis);
    if n % 2 == 0 {
        (x.clone(), false)
    } else {
        (Tensor::concat(&[x.clone(), x.narrow(axis, n - 1, 1)], axis), true)
    }
}

/// `(low, high)` halves along `axis`.
fn haar_split<S: Scalar>(x: &Tensor<S>, axis: usize) -> (Tensor<S>, Tensor<S>) {
    let n = x.dim(axis);
    let mut split = x.shape().to_vec();
    split[axis] = n / 2;
    split.insert(axis + 1, 2);
    let mut half = x.shape().to_vec();
    half[axis] = n / 2;
    let y = x.reshape(&split);
    let even = y.narrow(axis + 1, 0, 1).reshape(&half);
    let odd = y.narrow(axis + 1, 1, 1).reshape(&half);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    (even.add(&odd).scale(r), even.sub(&odd).scale(r))
}

pub fn dwt3d_haar<S: Scalar>(x: &Tensor<S>) -> DwtSubbands<S> {
    assert_eq!(x.rank(), 4, "dwt3d_haar expects [T, H, W, C]");
    let mut padded = [false; 3];
    let mut level = vec![x.clone()];
    for axis in 0..3 {
        let mut next = Vec::with_capacity(level.len() * 2);
        for band in &level {
            let (b, p) = pad_even(band, axis);
            padded[axis] |= p;
            let (lo, hi) = haar_split(&b, axis);
            next.push(lo);
            next.push(hi);
        }
        level = next;
    }
    DwtSubbands { bands: level, padded }
}

/// Sum over the 8 subbands of the mean absolute difference.
pub fn dwt_loss<S: Scalar>(x: &Tensor<S>, x_hat: &Tensor<S>) -> Result<Tensor<S>> {
    if x.shape() != x_hat.shape() {
        return Err(Error::dim(format!("dwt_loss shapes {:?} vs {:?}", x.shape(), x_hat.shape())));
    }
    let a = dwt3d_haar(x);
    let b = dwt3d_haar(x_hat);
    let terms: Vec<Tensor<S>> = a.bands.iter().zip(&b.bands).map(|(p, q)| p.l1(q)).collect();
    Ok(terms
        .iter()
        .skip(1)
        .fold(terms[0].clone(), |acc, t| acc.add(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Orthonormal 1D Haar analysis matrix (low rows then high rows).
    fn haar_matrix(n: usize) -> Vec<Vec<f64>> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n / 2 {
            m[i][2 * i] = r;
            m[i][2 * i + 1] = r;
            m[n / 2 + i][2 * i] = r;
            m[n / 2 + i][2 * i + 1] = -r;
        }
        m
    }

    #[test]
    fn matches_kronecker_oracle() {
        let mut rng = Rng::seeded(9);
        let x = Tensor::<f64>::randn(&[4, 4, 4, 1], &mut rng);
        let m = haar_matrix(4);
        // y = (M (x) M (x) M) vec(x); row index (a, b, c) -> band (a>=2, b>=2, c>=2)
        let bands = dwt3d_haar(&x);
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let mut v = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            for k in 0..4 {
                                v += m[a][i] * m[b][j] * m[c][k] * x.data()[(i * 4 + j) * 4 + k];
                            }
                        }
                    }
                    let band = (a / 2) * 4 + (b / 2) * 2 + c / 2;
                    let got = bands.bands[band].data()[((a % 2) * 2 + b % 2) * 2 + c % 2];
                    assert!((got - v).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn constant_has_no_detail() {
        let x = Tensor::<f32>::full(&[2, 4, 4, 3], 0.7);
        let b = dwt3d_haar(&x);
        assert!(b.bands[1..].iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        let want = 0.7 * 2f32.sqrt().powi(3);
        assert!(b.bands[0].data().iter().all(|&v| (v - want).abs() < 1e-6));
    }

    #[test]
    fn impulse_energy_is_one() {
        let mut d = vec![0.0f64; 2 * 2 * 2];
        d[5] = 1.0;
        let b = dwt3d_haar(&Tensor::new(&[2, 2, 2, 1], d));
        assert!((b.energy() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn odd_extents_are_padded_and_recorded() {
        let b = dwt3d_haar(&Tensor::<f32>::zeros(&[9, 4, 5, 1]));
        assert_eq!(b.padded, [true, false, true]);
        assert_eq!(b.bands[0].shape(), &[5, 2, 3, 1]);
    }

    #[test]
    fn constant_offset_only_moves_lll() {
        let mut rng = Rng::seeded(2);
        let x = Tensor::<f64>::randn(&[2, 4, 4, 3], &mut rng);
        let y = x.add_scalar(0.25);
        let l = dwt_loss(&x, &y).unwrap().item();
        assert!((l - 2f64.sqrt().powi(3) * 0.25).abs() < 1e-9);
        assert_eq!(dwt_loss(&x, &x).unwrap().item(), 0.0);
    }
}
