use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Law of the pre-shift timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseLaw {
    /// `sigmoid(u)`, `u ~ N(m, s)`.
    LogitNormal,
    /// `exp(u)`, `u ~ N(m, s)`, with draws above 1 rejected.
    LogNormal,
}

/// Training-time timestep distribution: base law, token-count dependent
/// shift toward high noise, and quantile truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct TimestepSampler {
    pub base: BaseLaw,
    pub m: f64,
    pub s: f64,
    /// Token count at which the shift is 1.
    pub n_ref: f64,
    /// Lower and upper quantiles kept.
    pub clamp: (f64, f64),
}

impl Default for TimestepSampler {
    fn default() -> Self {
        Self {
            base: BaseLaw::LogitNormal,
            m: 0.0,
            s: 1.0,
            n_ref: 256.0,
            clamp: (0.005, 0.999),
        }
    }
}

/// `mu * t / (1 + (mu - 1) * t)`; monotone, fixes 0 and 1.
pub fn shift_timestep(t: f64, mu: f64) -> f64 {
    mu * t / (1.0 + (mu - 1.0) * t)
}

/// Inverse of [`shift_timestep`].
pub fn unshift_timestep(t: f64, mu: f64) -> f64 {
    t / (mu - (mu - 1.0) * t)
}

impl TimestepSampler {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clamp;
        if !(self.s > 0.0 && self.n_ref > 0.0 && 0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Config(format!("bad timestep sampler {self:?}")));
        }
        Ok(())
    }

    pub fn mu(&self, n_tokens: usize) -> f64 {
        (n_tokens as f64 / self.n_ref).sqrt().max(1.0)
    }

    fn normal_bounds(&self) -> (f64, f64) {
        let n = Normal::new(self.m, self.s).expect("validated scale");
        let (lo, hi) = (n.inverse_cdf(self.clamp.0), n.inverse_cdf(self.clamp.1));
        match self.base {
            // keep only exp(u) <= 1
            BaseLaw::LogNormal => (lo.min(0.0), hi.min(0.0)),
            BaseLaw::LogitNormal => (lo, hi),
        }
    }

    fn base_map(&self, u: f64) -> f64 {
        match self.base {
            BaseLaw::LogitNormal => 1.0 / (1.0 + (-u).exp()),
            BaseLaw::LogNormal => u.exp(),
        }
    }

    /// `[t_lo, t_hi]` of the shifted, truncated law for a sequence length.
    pub fn interval(&self, n_tokens: usize) -> (f64, f64) {
        let mu = self.mu(n_tokens);
        let (lo, hi) = self.normal_bounds();
        (shift_timestep(self.base_map(lo), mu), shift_timestep(self.base_map(hi), mu))
    }

    pub fn sample(&self, n_tokens: usize, rng: &mut Rng) -> f64 {
        let (lo, hi) = self.normal_bounds();
        let u = loop {
            let u = self.m + self.s * rng.normal();
            if (lo..=hi).contains(&u) {
                break u;
            }
        };
        shift_timestep(self.base_map(u), self.mu(n_tokens))
    }
}

/// `n` independent training timesteps for sequences of `n_tokens` tokens.
pub fn sample_timesteps(n: usize, n_tokens: usize, sampler: &TimestepSampler, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| sampler.sample(n_tokens, rng)).collect()
}

/// `steps + 1` inference timesteps from 1 down to `t_final`, uniformly spaced
/// before the shift and then mapped through it.
pub fn inference_schedule(steps: usize, n_tokens: usize, sampler: &TimestepSampler, t_final: f64) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Domain("generation needs at least one step".into()));
    }
    if !(0.0..1.0).contains(&t_final) {
        return Err(Error::Domain(format!("final timestep {t_final} outside [0, 1)")));
    }
    let mu = sampler.mu(n_tokens);
    let end = unshift_timestep(t_final, mu);
    let mut ts: Vec<f64> = (0..=steps)
        .map(|k| shift_timestep(1.0 + (end - 1.0) * k as f64 / steps as f64, mu))
        .collect();
    ts[0] = 1.0;
    ts[steps] = t_final;
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_map_values() {
        assert_eq!(shift_timestep(0.37, 1.0), 0.37);
        assert_eq!(shift_timestep(0.5, 3.0), 0.75);
        assert!((unshift_timestep(0.75, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn schedule_endpoints() {
        let s = TimestepSampler::default();
        let ts = inference_schedule(4, 1024, &s, 0.05).unwrap();
        assert_eq!(ts.len(), 5);
        assert_eq!((ts[0], ts[4]), (1.0, 0.05));
        assert!(ts.windows(2).all(|w| w[0] > w[1]));
        assert!(inference_schedule(0, 10, &s, 0.05).is_err());
    }

    #[test]
    fn lognormal_stays_in_unit_interval() {
        let s = TimestepSampler {
            base: BaseLaw::LogNormal,
            m: -1.0,
            ..TimestepSampler::default()
        };
        let mut rng = Rng::seeded(2);
        assert!((0..2000).all(|_| {
            let t = s.sample(64, &mut rng);
            t > 0.0 && t <= 1.0
        }));
    }
}
