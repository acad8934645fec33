use crate::dit::TokenSequence;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Upper bound of the small timestep given to first-frame tokens in training.
pub const TRAIN_COND_MAX_T: f64 = 0.2;

/// Which tokens are held at a fixed noise level during generation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningSpec {
    pub tokens: Vec<usize>,
    pub t_c: f64,
}

impl ConditioningSpec {
    /// First latent frame of a full-grid sequence.
    pub fn first_frame<S: Scalar>(seq: &TokenSequence<S>, t_c: f64) -> Self {
        Self {
            tokens: first_frame_tokens(seq),
            t_c,
        }
    }

    /// `t_c` must sit below every timestep the free tokens will see.
    pub fn validate(&self, min_free_t: f64) -> Result<()> {
        if !(self.t_c >= 0.0 && self.t_c < min_free_t) {
            return Err(Error::Domain(format!(
                "conditioning timestep {} must be in [0, {min_free_t})",
                self.t_c
            )));
        }
        Ok(())
    }
}

/// Indices (within the sequence) of tokens belonging to latent frame 0.
pub fn first_frame_tokens<S: Scalar>(seq: &TokenSequence<S>) -> Vec<usize> {
    let per_frame = seq.grid[1] * seq.grid[2];
    seq.positions
        .iter()
        .enumerate()
        .filter(|(_, &p)| p < per_frame)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConditioning {
    pub timesteps: Vec<f64>,
    pub conditioned: bool,
    /// False for tokens kept out of the loss.
    pub loss_mask: Vec<bool>,
}

/// With probability `p_cond`, first-frame tokens get their own small
/// `t ~ U[0, 0.2]` and drop out of the loss; the rest share `global_t`.
pub fn apply_train_conditioning<S: Scalar>(
    seq: &TokenSequence<S>,
    global_t: f64,
    p_cond: f64,
    rng: &mut Rng,
) -> Result<TrainConditioning> {
    if !(0.0..=1.0).contains(&p_cond) {
        return Err(Error::Domain(format!("conditioning probability {p_cond} outside [0, 1]")));
    }
    let n = seq.len();
    let mut timesteps = vec![global_t; n];
    let mut loss_mask = vec![true; n];
    let conditioned = rng.bernoulli(p_cond);
    if conditioned {
        let t_c = rng.uniform_range(0.0, TRAIN_COND_MAX_T);
        for i in first_frame_tokens(seq) {
            timesteps[i] = t_c;
            loss_mask[i] = false;
        }
    }
    Ok(TrainConditioning {
        timesteps,
        conditioned,
        loss_mask,
    })
}
