use std::collections::HashMap;

use crate::layers::Module;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with optional decoupled weight decay (AdamW) and global-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            betas: (0.9, 0.95),
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: Some(1.0),
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self {
            weight_decay,
            ..Self::new(lr)
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently stored on `module`'s
    /// leaves, replaces each leaf with a fresh one and returns the pre-clip
    /// global gradient norm.
    pub fn step<S: Scalar, M: Module<S> + ?Sized>(&mut self, module: &mut M) -> f64 {
        let mut sq = 0.0;
        module.visit("", &mut |_, t| {
            if let Some(g) = t.grad() {
                sq += g.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>();
            }
        });
        let norm = sq.sqrt();
        let clip = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let (b1, b2) = self.betas;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let (lr, eps, wd) = (self.lr, self.eps, self.weight_decay);
        let moments = &mut self.moments;
        module.visit("", &mut |name, t| {
            if !t.requires_grad() {
                return;
            }
            let Some(g) = t.grad() else {
                *t = t.detach_param();
                return;
            };
            let (m, v) = moments
                .entry(name)
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let mut data = t.to_vec();
            for i in 0..data.len() {
                let gi = g[i].to_f64().unwrap() * clip;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mut p = data[i].to_f64().unwrap();
                p -= lr * wd * p;
                p -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                data[i] = S::of(p);
            }
            *t = Tensor::param(t.shape(), data);
        });
        norm
    }
}

/// Cosine decay from `base` at step 0 to `base * floor` at `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize, floor: f64) -> f64 {
    if total == 0 {
        return base;
    }
    let frac = (step.min(total) as f64 / total as f64 * std::f64::consts::PI).cos();
    base * (floor + (1.0 - floor) * 0.5 * (1.0 + frac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Linear;
    use crate::rng::Rng;

    #[test]
    fn adam_reduces_quadratic() {
        let mut rng = Rng::seeded(3);
        let mut lin = Linear::<f32>::new(2, 1, &mut rng);
        let mut opt = Adam::new(0.05);
        let x = Tensor::new(&[4, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 2.0]);
        let y = Tensor::new(&[4, 1], vec![2.0, -1.0, 1.0, -4.0]);
        let first = lin.forward(&x).mse(&y).item();
        for _ in 0..300 {
            let loss = lin.forward(&x).mse(&y);
            loss.backward();
            opt.step(&mut lin);
        }
        let last = lin.forward(&x).mse(&y).item();
        assert!(last < first * 0.01, "{first} -> {last}");
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1.0, 0, 10, 0.1), 1.0);
        assert!((cosine_lr(1.0, 10, 10, 0.1) - 0.1).abs() < 1e-12);
        assert!((cosine_lr(1.0, 5, 10, 0.0) - 0.5).abs() < 1e-12);
    }
}
