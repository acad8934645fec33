//! Latent-redundancy PCA, the RoPE frequency-spacing ablation, the
//! denoising-decoder A/B comparison, the finite-difference gradient suite,
//! and flat config files.

mod ablation;
mod config;
mod decoder_ab;
mod gradsuite;
mod heatmap;
mod pca;

pub use ablation::{ablation_run, rope_ablation, smooth_field, spacing_name, AblationConfig, AblationCurve, AblationReport};
pub use config::FlatConfig;
pub use decoder_ab::{decoder_ab_test, detail_energy, psnr_between, ssim_global, DecoderAbConfig, DecoderAbReport, DecoderAbRow};
pub use gradsuite::{gradient_case_names, gradient_csv, gradient_suite, GradCaseResult, GRAD_STEP, GRAD_TOLERANCE, MAX_COORDS};
pub use heatmap::{heatmap_pgm, write_heatmap};
pub use pca::{pca_explained_variance, PcaReport};
