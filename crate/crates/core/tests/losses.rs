use proptest::prelude::*;
use vidiff::losses::*;
use vidiff::vae::{LatentPosterior, VaeConfig, VideoTensor, VideoVae};
use vidiff::{Rng, Tensor};

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, &mut Rng::seeded(seed))
}

/// Orthonormal Haar rows for length `n`: averages first, then differences.
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
fn haar_matches_kronecker_matrix_on_even_cube() {
    let x = randn(&[4, 4, 4, 2], 1);
    let m = haar_matrix(4);
    let bands = dwt3d_haar(&x);
    for ch in 0..2 {
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let mut v = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            for k in 0..4 {
                                v += m[a][i] * m[b][j] * m[c][k] * x.data()[((i * 4 + j) * 4 + k) * 2 + ch];
                            }
                        }
                    }
                    let band = (a / 2) * 4 + (b / 2) * 2 + c / 2;
                    let got = bands.bands[band].data()[(((a % 2) * 2 + b % 2) * 2 + c % 2) * 2 + ch];
                    assert!((got - v).abs() < 1e-5, "{got} vs {v}");
                }
            }
        }
    }
    assert_eq!(SUBBAND_LABELS[0], "LLL");
    assert_eq!(SUBBAND_LABELS[7], "HHH");
}

#[test]
fn dwt_loss_closed_forms() {
    let x = randn(&[2, 4, 4, 3], 2);
    assert_eq!(dwt_loss(&x, &x).unwrap().item(), 0.0);
    let c = -0.37;
    let shifted = x.add_scalar(c);
    let got = dwt_loss(&x, &shifted).unwrap().item();
    assert!((got - 2f64.sqrt().powi(3) * c.abs()).abs() < 1e-12, "{got}");
    assert!(dwt_loss(&x, &randn(&[2, 4, 4, 2], 3)).is_err());

    let y = randn(&[2, 4, 4, 3], 4);
    let (bx, by) = (dwt3d_haar(&x), dwt3d_haar(&y));
    let oracle: f64 = bx
        .bands
        .iter()
        .zip(&by.bands)
        .map(|(a, b)| a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.numel() as f64)
        .sum();
    assert!((dwt_loss(&x, &y).unwrap().item() - oracle).abs() < 1e-12);
}

fn posterior(mean: Tensor<f64>, logvar: Tensor<f64>) -> LatentPosterior<f64> {
    LatentPosterior::new(mean, logvar, 1.0).unwrap()
}

#[test]
fn kl_matches_per_channel_formula() {
    let mean = randn(&[2, 2, 3, 4], 5);
    let lv = randn(&[2, 2, 3, 1], 6);
    let got = kl_uniform_logvar(&posterior(mean.clone(), lv.clone())).item();
    let mut sum = 0.0;
    for (i, m) in mean.data().iter().enumerate() {
        let l = lv.data()[i / 4];
        sum += 0.5 * (m * m + l.exp() - l - 1.0);
    }
    assert!((got - sum / mean.numel() as f64).abs() < 1e-12);
    let zero = kl_uniform_logvar(&posterior(Tensor::zeros(&[1, 1, 2, 3]), Tensor::zeros(&[1, 1, 2, 1])));
    assert_eq!(zero.item(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn haar_conserves_energy(t in 1usize..6, h in 1usize..6, w in 1usize..6, c in 1usize..3, seed in 0u64..1000) {
        let x = randn(&[2 * t, 2 * h, 2 * w, c], seed);
        let e: f64 = x.data().iter().map(|v| v * v).sum();
        let b = dwt3d_haar(&x);
        prop_assert!((b.energy() - e).abs() <= 1e-4 * e);
    }

    #[test]
    fn constant_clips_have_no_detail(v in -2.0f64..2.0, t in 1usize..4, h in 1usize..4) {
        let x = Tensor::full(&[2 * t, 2 * h, 4, 1], v);
        let b = dwt3d_haar(&x);
        prop_assert!(b.bands[1..].iter().all(|band| band.data().iter().all(|&d| d == 0.0)));
    }

    #[test]
    fn dwt_loss_is_symmetric(seed in 0u64..1000) {
        let x = randn(&[2, 4, 4, 3], seed);
        let y = randn(&[2, 4, 4, 3], seed + 1000);
        prop_assert_eq!(dwt_loss(&x, &y).unwrap().item(), dwt_loss(&y, &x).unwrap().item());
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_standard_normal(seed in 0u64..1000, scale in 0.0f64..2.0) {
        let mean = randn(&[1, 2, 2, 3], seed).scale(scale);
        let lv = randn(&[1, 2, 2, 1], seed + 1).scale(scale);
        let kl = kl_uniform_logvar(&posterior(mean, lv)).item();
        prop_assert!(kl >= 0.0);
        if scale > 1e-3 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn hinge_is_invariant_to_swap_and_relabel(seed in 0u64..200) {
        let mut rng = Rng::seeded(seed);
        let disc = RganDiscriminator::<f64>::new(4, &mut rng);
        let x = randn(&[3, 8, 8, 3], seed + 1);
        let y = randn(&[3, 8, 8, 3], seed + 2);
        let batch = DiscriminatorBatch::shuffled(&x, &y, &mut rng);
        let (l, ok) = discriminator_hinge(&batch, &disc).unwrap();
        let (ls, oks) = discriminator_hinge(&batch.swapped(), &disc).unwrap();
        prop_assert!((l.item() - ls.item()).abs() < 1e-12);
        prop_assert_eq!(ok, oks);
        let logit = rgan_discriminator(&batch, &disc).unwrap().item();
        let swapped = rgan_discriminator(&batch.swapped(), &disc).unwrap().item();
        prop_assert!((logit + swapped).abs() < 1e-12);
    }
}

#[test]
fn indistinguishable_pair_sits_at_the_hinge_floor() {
    let mut rng = Rng::seeded(7);
    let disc = RganDiscriminator::<f64>::new(4, &mut rng);
    let x = randn(&[3, 8, 8, 3], 8);
    let out = rgan_losses(&[x.clone(), x.clone()], &[x.clone(), x.clone()], &disc, &mut rng).unwrap();
    assert_eq!(out.d_loss.item(), 2.0);
    assert_eq!(out.g_loss.item(), 0.0);
}

#[test]
fn global_swap_leaves_expected_d_loss_unchanged() {
    let mut rng = Rng::seeded(9);
    let disc = RganDiscriminator::<f64>::new(4, &mut rng);
    let xs: Vec<_> = (0..6).map(|i| randn(&[3, 8, 8, 3], 10 + i)).collect();
    let rs: Vec<_> = xs.iter().map(|x| x.scale(0.5)).collect();
    let expected = |swap: bool| -> f64 {
        xs.iter()
            .zip(&rs)
            .map(|(x, r)| {
                let both = [true, false].map(|a_orig| {
                    let b = if a_orig {
                        DiscriminatorBatch { a: x.clone(), b: r.clone(), a_is_original: true }
                    } else {
                        DiscriminatorBatch { a: r.clone(), b: x.clone(), a_is_original: false }
                    };
                    let b = if swap { b.swapped() } else { b };
                    discriminator_hinge(&b, &disc).unwrap().0.item()
                });
                (both[0] + both[1]) / 2.0
            })
            .sum::<f64>()
    };
    assert!((expected(false) - expected(true)).abs() < 1e-12);
}

fn tiny_vae(rng: &mut Rng) -> VideoVae<f64> {
    let mut cfg = VaeConfig::factors(4, 1, 4);
    cfg.patch_spatial = 2;
    cfg.enc_channels = vec![4, 4];
    cfg.dec_channels = vec![4, 4];
    cfg.noise_inject_stages = vec![0];
    cfg.norm_groups = 2;
    cfg.time_embed_dim = 8;
    VideoVae::new(cfg, rng).unwrap()
}

#[test]
fn total_loss_is_the_weighted_sum_of_its_terms() {
    let mut rng = Rng::seeded(11);
    let vae = tiny_vae(&mut rng);
    let disc = RganDiscriminator::<f64>::new(4, &mut rng);
    let x = VideoTensor::new(Tensor::new(&[2, 8, 8, 3], rng.uniform_vec(384, 0.0, 1.0)), 12.0).unwrap();
    let w = VaeLossWeights::default();
    let out = total_vae_loss(&x, 0.1, &mut Rng::seeded(12), &w, &vae, Some(&disc), None).unwrap();

    let mut replay = Rng::seeded(12);
    let f = vae.forward_train(&x, 0.1, &mut replay).unwrap();
    let xh = &f.reconstruction.pixels;
    let mse = xh.mse(&x.pixels).item();
    let dwt = dwt_loss(&x.pixels, xh).unwrap().item();
    let kl = kl_uniform_logvar(&f.posterior).item();
    let g = rgan_losses(&[x.pixels.clone()], &[xh.clone()], &disc, &mut replay).unwrap().g_loss.item();
    let want = w.w_mse * mse + w.w_dwt * dwt + w.w_kl * kl + w.w_gan * g;
    assert!((out.loss.item() - want).abs() < 1e-6);
    assert!((out.breakdown.mse - mse).abs() < 1e-12);
    assert!((out.breakdown.gan - g).abs() < 1e-12);

    let zero = VaeLossWeights { w_mse: 0.0, w_dwt: 0.0, w_kl: 0.0, w_gan: 0.0 };
    assert_eq!(total_vae_loss(&x, 0.1, &mut rng, &zero, &vae, Some(&disc), None).unwrap().loss.item(), 0.0);
    let mse_only = VaeLossWeights { w_mse: 1.0, ..zero };
    let out = total_vae_loss(&x, 0.0, &mut rng, &mse_only, &vae, None, None).unwrap();
    assert_eq!(out.loss.item(), out.breakdown.mse);
    let bad = VaeLossWeights { w_kl: -1.0, ..zero };
    assert!(total_vae_loss(&x, 0.0, &mut rng, &bad, &vae, None, None).is_err());
}

struct Offset(f64);

impl PerceptualHook<f64> for Offset {
    fn distance(&self, x: &Tensor<f64>, x_hat: &Tensor<f64>) -> Tensor<f64> {
        x.sub(x_hat).abs().mean().add_scalar(self.0)
    }
}

#[test]
fn perceptual_hook_is_optional_and_weighted() {
    let mut rng = Rng::seeded(13);
    let vae = tiny_vae(&mut rng);
    let x = VideoTensor::new(Tensor::new(&[1, 8, 8, 3], rng.uniform_vec(192, 0.0, 1.0)), 12.0).unwrap();
    let w = VaeLossWeights::default();
    let plain = total_vae_loss(&x, 0.0, &mut Rng::seeded(1), &w, &vae, None, None).unwrap();
    let hook = Offset(2.0);
    let with = total_vae_loss(&x, 0.0, &mut Rng::seeded(1), &w, &vae, None, Some((&hook, 0.5))).unwrap();
    let expect = plain.loss.item() + 0.5 * with.breakdown.perceptual;
    assert!((with.loss.item() - expect).abs() < 1e-12);
    assert!(with.breakdown.perceptual >= 2.0);
}
