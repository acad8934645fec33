use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vae::LatentTensor;

/// Channel-redundancy summary of a set of latents.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaReport {
    /// Covariance eigenvalues, descending, clamped at 0.
    pub eigenvalues: Vec<f64>,
    pub explained: Vec<f64>,
    /// Running sum of `explained`; ends at 1.
    pub cumulative: Vec<f64>,
    /// Row-major `C x C` channel correlations.
    pub correlation: Vec<f64>,
    pub channels: usize,
    pub observations: usize,
}

impl PcaReport {
    /// Mean height of the cumulative curve; lower means flatter, i.e. less
    /// redundancy between channels.
    pub fn auc(&self) -> f64 {
        self.cumulative.iter().sum::<f64>() / self.cumulative.len() as f64
    }

    pub fn correlation_at(&self, i: usize, j: usize) -> f64 {
        self.correlation[i * self.channels + j]
    }

    /// `component,eigenvalue,explained,cumulative` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,eigenvalue,explained,cumulative\n");
        for i in 0..self.channels {
            s.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                self.eigenvalues[i],
                self.explained[i],
                self.cumulative[i]
            ));
        }
        s
    }
}

/// PCA over latent positions: every `(t, h, w)` location of every latent is
/// one observation of `C` channels.
pub fn pca_explained_variance<S: Scalar>(latents: &[LatentTensor<S>]) -> Result<PcaReport> {
    let c = latents
        .first()
        .ok_or_else(|| Error::Domain("PCA needs at least one latent".into()))?
        .channels();
    if latents.iter().any(|z| z.channels() != c) {
        return Err(Error::dim("latents disagree on channel count"));
    }
    let n: usize = latents.iter().map(|z| z.tokens()).sum();
    if n < c {
        return Err(Error::Domain(format!("{n} observations for {c} channels")));
    }
    let mut mean = vec![0.0; c];
    for z in latents {
        for row in z.values.data().chunks(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.to_f64().unwrap();
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(c, c);
    let mut centered = vec![0.0; c];
    for z in latents {
        for row in z.values.data().chunks(c) {
            for j in 0..c {
                centered[j] = row[j].to_f64().unwrap() - mean[j];
            }
            for i in 0..c {
                for j in i..c {
                    cov[(i, j)] += centered[i] * centered[j];
                }
            }
        }
    }
    for i in 0..c {
        for j in i..c {
            cov[(i, j)] /= n as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let mut correlation = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let d = (cov[(i, i)] * cov[(j, j)]).sqrt();
            correlation[i * c + j] = if i == j {
                1.0
            } else if d > 0.0 {
                (cov[(i, j)] / d).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eigenvalues.iter().sum();
    let explained: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|l| l / total).collect()
    } else {
        // no variance at all: attribute everything to the first component
        (0..c).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect()
    };
    let mut cumulative: Vec<f64> = explained
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e;
            Some(*acc)
        })
        .collect();
    // kill rounding drift so the curve is monotone and ends exactly at 1
    for i in 1..c {
        cumulative[i] = cumulative[i].max(cumulative[i - 1]).min(1.0);
    }
    cumulative[c - 1] = 1.0;
    Ok(PcaReport {
        eigenvalues,
        explained,
        cumulative,
        correlation,
        channels: c,
        observations: n,
    })
}
