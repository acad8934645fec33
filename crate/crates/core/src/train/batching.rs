use std::collections::BTreeMap;

use super::dataset::Bucket;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vae::VaeConfig;

pub const MAX_DROP_RATE: f64 = 0.2;

/// How one sample is cut down to the common token count.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    pub bucket: Bucket,
    pub target_tokens: usize,
    pub drop_rate: f64,
    /// Surviving token indices, ascending.
    pub kept: Vec<usize>,
}

/// Drops `count - k` of `count` token indices uniformly at random and
/// returns the survivors in order.
pub fn plan_drop(count: usize, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if k > count {
        return Err(Error::Config(format!("cannot reach {k} tokens from {count} by dropping")));
    }
    let drop = count - k;
    // integer form of drop / count <= 0.2
    if drop * 5 > count {
        return Err(Error::Config(format!(
            "reaching {k} tokens from {count} drops {:.1}%, above the {:.0}% limit",
            100.0 * drop as f64 / count as f64,
            100.0 * MAX_DROP_RATE
        )));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    // partial Fisher-Yates: the first `drop` slots are the dropped set
    for i in 0..drop {
        let j = i + rng.below(count - i);
        idx.swap(i, j);
    }
    let mut kept = idx.split_off(drop);
    kept.sort_unstable();
    Ok(kept)
}

/// Plan for one sample of a bucket.
pub fn plan_sample(bucket: Bucket, vae: &VaeConfig, k: usize, rng: &mut Rng) -> Result<BatchPlan> {
    let count = bucket.tokens(vae)?;
    let kept = plan_drop(count, k, rng)?;
    Ok(BatchPlan {
        bucket,
        target_tokens: k,
        drop_rate: (count - k) as f64 / count as f64,
        kept,
    })
}

/// One training batch: clip indices that share a bucket and their plans.
#[derive(Clone, Debug)]
pub struct Batch {
    pub bucket: Bucket,
    pub samples: Vec<(usize, BatchPlan)>,
}

/// Endless batches cycling round-robin over buckets (so image and video
/// batches interleave), each filled with random clips of that bucket.
pub struct BatchStream {
    groups: Vec<(Bucket, Vec<usize>)>,
    vae: VaeConfig,
    k: usize,
    batch_size: usize,
    next: usize,
    rng: Rng,
}

impl BatchStream {
    pub fn groups(&self) -> impl Iterator<Item = (Bucket, usize)> + '_ {
        self.groups.iter().map(|(b, v)| (*b, v.len()))
    }
}

impl Iterator for BatchStream {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let (bucket, members) = &self.groups[self.next % self.groups.len()];
        self.next += 1;
        let samples = (0..self.batch_size)
            .map(|_| {
                let clip = members[self.rng.below(members.len())];
                let plan = plan_sample(*bucket, &self.vae, self.k, &mut self.rng).expect("buckets checked up front");
                (clip, plan)
            })
            .collect();
        Some(Batch {
            bucket: *bucket,
            samples,
        })
    }
}

/// Groups clips by bucket and checks every bucket can reach `k` tokens.
pub fn plan_batches(clip_buckets: &[Bucket], vae: &VaeConfig, k: usize, batch_size: usize, rng: &Rng) -> Result<BatchStream> {
    if clip_buckets.is_empty() || batch_size == 0 {
        return Err(Error::Config("batch planning needs clips and a positive batch size".into()));
    }
    let mut groups: BTreeMap<Bucket, Vec<usize>> = BTreeMap::new();
    for (i, b) in clip_buckets.iter().enumerate() {
        groups.entry(*b).or_default().push(i);
    }
    let max_count = groups.keys().map(|b| b.tokens(vae)).collect::<Result<Vec<_>>>()?;
    let max_count = *max_count.iter().max().unwrap();
    if (k as f64) < (1.0 - MAX_DROP_RATE) * max_count as f64 {
        return Err(Error::Config(format!("target {k} tokens is below 80% of the largest bucket ({max_count})")));
    }
    for b in groups.keys() {
        let count = b.tokens(vae)?;
        if count < k || (count - k) * 5 > count {
            return Err(Error::Config(format!(
                "bucket {}x{}x{} has {count} tokens; target {k} needs a drop rate outside [0, 20%]",
                b.frames, b.height, b.width
            )));
        }
    }
    Ok(BatchStream {
        groups: groups.into_iter().collect(),
        vae: vae.clone(),
        k,
        batch_size,
        next: 0,
        rng: rng.fork(0xba7c),
    })
}
