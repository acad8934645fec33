//! Synthetic data, batching with token dropping, the VAE and transformer
//! training loops, and the on-disk formats they use.

mod batching;
mod dataset;
mod dit_train;
pub mod formats;
mod metrics;
pub mod scene;
mod vae_train;

pub use batching::{plan_batches, plan_drop, plan_sample, Batch, BatchPlan, BatchStream, MAX_DROP_RATE};
pub use dataset::{generate_corpus, is_eval_name, make_dataset, name_hash, Bucket, Clip, Corpus, DESK_BUCKETS, MANIFEST_NAME};
pub use dit_train::{
    corpus_flow_loss, dit_checkpoint, encode_corpus, load_dit, train_dit, DitTrainConfig, DitTrainOutcome, DIT_METRICS_COLUMNS,
};
pub use formats::{CheckpointEntry, CheckpointFile, RawVideoFile};
pub use metrics::{psnr, MetricsTable};
pub use scene::{detect_motion, Motion, SceneSpec, Shape};
pub use vae_train::{eval_psnr, load_vae, train_vae, vae_checkpoint, VaeTrainConfig, VaeTrainOutcome, VAE_METRICS_COLUMNS};
