use super::config::{DitConfig, FrequencySpacing, RopeConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `axis_dim / 2` frequencies `f_min * g^j`.
pub fn rope_frequencies(axis_dim: usize, f_min: f64, g: f64) -> Result<Vec<f64>> {
    if axis_dim % 2 != 0 || axis_dim == 0 {
        return Err(Error::Config(format!("rope axis dimension {axis_dim} must be even and positive")));
    }
    if g <= 1.0 {
        return Err(Error::Config(format!("rope growth {g} must exceed 1")));
    }
    Ok((0..axis_dim / 2).map(|j| f_min * g.powi(j as i32)).collect())
}

/// Frequencies of one axis spanning `[f_min, f_max]` with the configured spacing.
pub fn axis_frequencies(axis_dim: usize, rope: &RopeConfig) -> Result<Vec<f64>> {
    let n = axis_dim / 2;
    let exp = if n <= 1 {
        rope_frequencies(axis_dim, rope.f_min, 2.0)?
    } else {
        let g = (rope.f_max / rope.f_min).powf(1.0 / (n - 1) as f64);
        let mut f = rope_frequencies(axis_dim, rope.f_min, g)?;
        // pin the top endpoint exactly
        f[n - 1] = rope.f_max;
        f
    };
    Ok(match rope.spacing {
        FrequencySpacing::Exponential => exp,
        FrequencySpacing::InverseExponential => {
            let (lo, hi) = (exp[0], exp[n - 1]);
            (0..n).map(|j| lo + hi - exp[n - 1 - j]).collect()
        }
    })
}

/// Pixel/second coordinates to fractions of the configured maxima, clamped to `[0, 1]`.
pub fn normalize_coords(coords: &[[f64; 3]], cfg: &DitConfig) -> Vec<[f64; 3]> {
    coords
        .iter()
        .map(|&[t, x, y]| {
            [
                (t / cfg.max_duration).clamp(0.0, 1.0),
                (x / cfg.max_width).clamp(0.0, 1.0),
                (y / cfg.max_height).clamp(0.0, 1.0),
            ]
        })
        .collect()
}

/// Per-token rotation tables for a head: `(cos, sin)`, each `[N, head_dim / 2]`.
/// Pair order is temporal pairs, then x, then y.
#[derive(Clone, Debug)]
pub struct RopeTables<S: Scalar = f32> {
    pub cos: Vec<S>,
    pub sin: Vec<S>,
    pub pairs: usize,
}

impl<S: Scalar> RopeTables<S> {
    pub fn new(coords: &[[f64; 3]], cfg: &DitConfig) -> Result<Self> {
        let (dt, dx, dy) = cfg.axis_split();
        let freqs = [
            axis_frequencies(dt, &cfg.rope)?,
            axis_frequencies(dx, &cfg.rope)?,
            axis_frequencies(dy, &cfg.rope)?,
        ];
        let pairs = cfg.head_dim() / 2;
        let mut cos = Vec::with_capacity(coords.len() * pairs);
        let mut sin = Vec::with_capacity(coords.len() * pairs);
        for c in coords {
            for (axis, fs) in freqs.iter().enumerate() {
                for f in fs {
                    let a = f * c[axis];
                    cos.push(S::of(a.cos()));
                    sin.push(S::of(a.sin()));
                }
            }
        }
        Ok(Self { cos, sin, pairs })
    }
}

/// Rotates `[N, heads, head_dim]` queries or keys by their tokens' coordinates.
pub fn apply_rope<S: Scalar>(x: &Tensor<S>, coords_normalized: &[[f64; 3]], cfg: &DitConfig) -> Result<Tensor<S>> {
    if x.rank() != 3 || x.dim(2) != cfg.head_dim() || x.dim(0) != coords_normalized.len() {
        return Err(Error::dim(format!(
            "apply_rope on {:?} with {} coordinates, head dim {}",
            x.shape(),
            coords_normalized.len(),
            cfg.head_dim()
        )));
    }
    let tables = RopeTables::new(coords_normalized, cfg)?;
    Ok(x.rotate_pairs(&tables.cos, &tables.sin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn geometric_lists() {
        assert_eq!(rope_frequencies(8, 1.0, 2.0).unwrap(), vec![1.0, 2.0, 4.0, 8.0]);
        let f = rope_frequencies(4, std::f64::consts::PI, 10.0).unwrap();
        assert_eq!(f, vec![std::f64::consts::PI, 10.0 * std::f64::consts::PI]);
        assert!(rope_frequencies(3, 1.0, 2.0).is_err());
    }

    #[test]
    fn inverse_spacing_mirrors_gaps_with_same_endpoints() {
        let mut rope = RopeConfig {
            f_min: 1.0,
            f_max: 1000.0,
            spacing: FrequencySpacing::Exponential,
        };
        let e = axis_frequencies(8, &rope).unwrap();
        rope.spacing = FrequencySpacing::InverseExponential;
        let i = axis_frequencies(8, &rope).unwrap();
        assert_eq!((i[0], i[3]), (e[0], e[3]));
        let gaps = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
        let (ge, mut gi) = (gaps(&e), gaps(&i));
        gi.reverse();
        for (a, b) in ge.iter().zip(&gi) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_coords_are_identity_and_pi_negates() {
        let cfg = DitConfig::desk();
        let mut rng = Rng::seeded(1);
        let q = Tensor::<f64>::randn(&[2, cfg.heads, cfg.head_dim()], &mut rng);
        let out = apply_rope(&q, &[[0.0; 3]; 2], &cfg).unwrap();
        assert_eq!(out.data(), q.data());

        let x = Tensor::<f64>::new(&[1, 2], vec![0.3, -0.7]);
        let pi = std::f64::consts::PI;
        let y = x.rotate_pairs(&[pi.cos()], &[pi.sin()]);
        assert!((y.data()[0] + 0.3).abs() < 1e-12 && (y.data()[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn normalizes_and_clamps() {
        let cfg = DitConfig::desk();
        let n = normalize_coords(&[[0.0; 3], [cfg.max_duration, 32.0, 999.0]], &cfg);
        assert_eq!(n[0], [0.0; 3]);
        assert_eq!(n[1], [1.0, 0.5, 1.0]);
    }
}
