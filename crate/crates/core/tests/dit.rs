use proptest::prelude::*;
use vidiff::dit::*;
use vidiff::layers::Module;
use vidiff::tensor::finite_difference_check;
use vidiff::{Rng, Tensor};

fn small_cfg() -> DitConfig {
    let mut c = DitConfig::desk();
    c.hidden_dim = 32;
    c.heads = 2;
    c.blocks = 2;
    c.latent_channels = 4;
    c.text_dim = 8;
    c.vocab_size = 10;
    c.time_embed_dim = 16;
    c
}

fn perturb(model: &mut Dit<f64>, rng: &mut Rng, std: f64) {
    model.visit("", &mut |_, t| {
        let data = t.data().iter().map(|v| v + std * rng.normal()).collect();
        *t = Tensor::param(t.shape(), data);
    });
}

fn random_seq(n: usize, c: usize, rng: &mut Rng) -> TokenSequence<f64> {
    let coords = (0..n)
        .map(|_| [rng.uniform() * 0.8, rng.uniform() * 60.0, rng.uniform() * 60.0])
        .collect();
    let ts = (0..n).map(|_| rng.uniform()).collect();
    TokenSequence::new(Tensor::randn(&[n, c], rng), coords, ts, 12.0, [1, 1, n]).unwrap()
}

fn dot_per_head(a: &Tensor<f64>, b: &Tensor<f64>, i: usize, j: usize, head: usize) -> f64 {
    let (h, hd) = (a.dim(1), a.dim(2));
    let ra = &a.data()[(i * h + head) * hd..(i * h + head + 1) * hd];
    let rb = &b.data()[(j * h + head) * hd..(j * h + head + 1) * hd];
    ra.iter().zip(rb).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rope_logits_depend_only_on_coordinate_differences(seed in 0u64..1000, dt in -0.3f64..0.3, dx in -0.3f64..0.3, dy in -0.3f64..0.3) {
        let cfg = DitConfig::desk();
        let mut rng = Rng::seeded(seed);
        let q = Tensor::<f64>::randn(&[2, cfg.heads, cfg.head_dim()], &mut rng);
        let k = Tensor::<f64>::randn(&[2, cfg.heads, cfg.head_dim()], &mut rng);
        let c = [[0.1, 0.2, 0.3], [0.5, 0.4, 0.45]];
        let shifted: Vec<[f64; 3]> = c.iter().map(|p| [p[0] + dt, p[1] + dx, p[2] + dy]).collect();
        let (q0, k0) = (apply_rope(&q, &c, &cfg).unwrap(), apply_rope(&k, &c, &cfg).unwrap());
        let (q1, k1) = (apply_rope(&q, &shifted, &cfg).unwrap(), apply_rope(&k, &shifted, &cfg).unwrap());
        for h in 0..cfg.heads {
            let a = dot_per_head(&q0, &k0, 0, 1, h);
            let b = dot_per_head(&q1, &k1, 0, 1, h);
            prop_assert!((a - b).abs() < 1e-5 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn rope_preserves_pair_norms(seed in 0u64..1000) {
        let cfg = DitConfig::desk();
        let mut rng = Rng::seeded(seed);
        let x = Tensor::<f64>::randn(&[3, cfg.heads, cfg.head_dim()], &mut rng);
        let coords: Vec<[f64; 3]> = (0..3).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect();
        let y = apply_rope(&x, &coords, &cfg).unwrap();
        for (a, b) in x.data().chunks(2).zip(y.data().chunks(2)) {
            let (na, nb) = (a[0].hypot(a[1]), b[0].hypot(b[1]));
            prop_assert!((na - nb).abs() < 1e-12);
        }
    }
}

#[test]
fn single_token_attention_is_the_value_path() {
    let cfg = small_cfg();
    let mut rng = Rng::seeded(3);
    let attn = SelfAttention::<f64>::new(&cfg, &mut rng);
    let x = Tensor::randn(&[1, cfg.hidden_dim], &mut rng);
    let rope = RopeTables::new(&[[0.3, 0.2, 0.1]], &cfg).unwrap();
    let out = attn.forward(&x, &rope).output;
    let expect = attn.o.forward(&attn.v.forward(&x));
    for (a, b) in out.data().iter().zip(expect.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn identical_tokens_have_identical_rows_and_rows_sum_to_one() {
    let cfg = small_cfg();
    let mut rng = Rng::seeded(4);
    let attn = SelfAttention::<f64>::new(&cfg, &mut rng);
    let row = Tensor::<f64>::randn(&[1, cfg.hidden_dim], &mut rng);
    let other = Tensor::randn(&[2, cfg.hidden_dim], &mut rng);
    let x = Tensor::concat(&[row.clone(), row, other], 0);
    let coords = [[0.1, 0.1, 0.1], [0.1, 0.1, 0.1], [0.2, 0.5, 0.3], [0.7, 0.2, 0.9]];
    let rope = RopeTables::new(&coords, &cfg).unwrap();
    let w = attn.forward(&x, &rope).weights.unwrap();
    let n = 4;
    for h in 0..cfg.heads {
        let r = |i: usize| &w.data()[(h * n + i) * n..(h * n + i + 1) * n];
        assert_eq!(r(0), r(1));
        for i in 0..n {
            assert!((r(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn qk_norm_bounds_logits() {
    let cfg = small_cfg();
    let mut rng = Rng::seeded(5);
    let mut attn = SelfAttention::<f64>::new(&cfg, &mut rng);
    let hd = cfg.head_dim();
    attn.q_scale = Tensor::param(&[hd], (0..hd).map(|_| 0.5 + rng.uniform()).collect());
    attn.k_scale = Tensor::param(&[hd], (0..hd).map(|_| 0.5 + rng.uniform()).collect());
    let max_scale = attn
        .q_scale
        .data()
        .iter()
        .chain(attn.k_scale.data())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    // large inputs would give huge logits without normalization
    let x = Tensor::randn(&[12, cfg.hidden_dim], &mut rng).scale(50.0);
    let coords: Vec<[f64; 3]> = (0..12).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect();
    let logits = attn.logits(&x, &RopeTables::new(&coords, &cfg).unwrap());
    let bound = (hd as f64).sqrt() * max_scale * max_scale;
    assert!(logits.data().iter().all(|l| l.abs() <= bound + 1e-9));
}

#[test]
fn full_attention_connects_every_token() {
    let cfg = small_cfg();
    let mut rng = Rng::seeded(6);
    let attn = SelfAttention::<f64>::new(&cfg, &mut rng);
    let n = 5;
    let x = Tensor::<f64>::randn(&[n, cfg.hidden_dim], &mut rng);
    let coords: Vec<[f64; 3]> = (0..n).map(|i| [0.1 * i as f64, 0.2, 0.3]).collect();
    let rope = RopeTables::new(&coords, &cfg).unwrap();
    let base = attn.forward(&x, &rope).output;
    for j in 0..n {
        let mut d = x.to_vec();
        d[j * cfg.hidden_dim] += 0.5;
        let out = attn.forward(&Tensor::new(x.shape(), d), &rope).output;
        for i in 0..n {
            let row = |t: &Tensor<f64>| t.data()[i * cfg.hidden_dim..(i + 1) * cfg.hidden_dim].to_vec();
            let diff: f64 = row(&out).iter().zip(row(&base)).map(|(a, b)| (a - b).abs()).sum();
            assert!(diff > 1e-9, "token {i} ignores token {j}");
        }
    }
}

fn trained_cross(cfg: &DitConfig, rng: &mut Rng) -> CrossAttention<f64> {
    let mut c = CrossAttention::new(cfg, rng);
    c.o = vidiff::layers::Linear::new(cfg.hidden_dim, cfg.hidden_dim, rng);
    c
}

#[test]
fn cross_attention_masking() {
    let cfg = small_cfg();
    let mut rng = Rng::seeded(7);
    let cross = trained_cross(&cfg, &mut rng);
    let x = Tensor::<f64>::randn(&[3, cfg.hidden_dim], &mut rng);

    let none = CaptionEmbedding::new(Tensor::randn(&[2, cfg.text_dim], &mut rng), vec![false, false]).unwrap();
    let out = cross.forward(&x, &none);
    assert!(out.output.data().iter().all(|&v| v == 0.0));

    let one = Tensor::<f64>::randn(&[1, cfg.text_dim], &mut rng);
    let w = cross.forward(&x, &CaptionEmbedding::unmasked(one.clone())).weights.unwrap();
    assert!(w.data().iter().all(|&v| v == 1.0));

    let base_tokens = Tensor::<f64>::randn(&[3, cfg.text_dim], &mut rng);
    let base = cross.forward(&x, &CaptionEmbedding::unmasked(base_tokens.clone())).output;
    let padded = Tensor::concat(&[base_tokens, Tensor::randn(&[4, cfg.text_dim], &mut rng)], 0);
    let mask = [vec![true; 3], vec![false; 4]].concat();
    let out = cross.forward(&x, &CaptionEmbedding::new(padded, mask).unwrap());
    for (a, b) in out.output.data().iter().zip(base.data()) {
        assert!((a - b).abs() < 1e-6);
    }
    let w = out.weights.unwrap();
    for r in w.data().chunks(7) {
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(r[3..].iter().all(|&v| v == 0.0));
    }
}

fn model_and_inputs(seed: u64) -> (Dit<f64>, TokenSequence<f64>, CaptionEmbedding<f64>) {
    let cfg = small_cfg();
    let mut rng = Rng::seeded(seed);
    let mut model = Dit::<f64>::new(cfg.clone(), &mut rng).unwrap();
    perturb(&mut model, &mut rng, 0.05);
    let seq = random_seq(6, cfg.latent_channels, &mut rng);
    let cap = model.embed_caption(&[1, 4, 2, 0], &[true, true, true, false]).unwrap();
    (model, seq, cap)
}

#[test]
fn constant_timestep_matches_global_modulation_bitwise() {
    let (model, mut seq, cap) = model_and_inputs(8);
    seq.timesteps = vec![0.37; seq.len()];
    let per_token = model.forward(&seq, &cap).unwrap();
    let global = model
        .forward_with_time(&seq, &cap, &model.global_time_conditioning(0.37))
        .unwrap();
    assert_eq!(per_token.data(), global.data());
}

#[test]
fn distinct_timesteps_give_distinct_modulation() {
    let (model, _, _) = model_and_inputs(9);
    let m = adaln_modulate(0, &[0.0, 1.0], &model).unwrap();
    let d = model.cfg.hidden_dim;
    let (a, b) = (&m.scale1.data()[..d], &m.scale1.data()[d..]);
    assert!(a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-6));
    assert!(adaln_modulate(0, &[1.5], &model).is_err());
    assert!(adaln_modulate(9, &[0.5], &model).is_err());
}

#[test]
fn zero_gates_leave_only_the_residual_path() {
    let cfg = small_cfg();
    let mut rng = Rng::seeded(10);
    let mut model = Dit::<f64>::new(cfg.clone(), &mut rng).unwrap();
    let seq = random_seq(5, cfg.latent_channels, &mut rng);
    let cap = model.embed_caption(&[3, 1], &[true, true]).unwrap();
    assert!(model.forward(&seq, &cap).unwrap().data().iter().all(|&v| v == 0.0));

    // block identity at init
    let x = Tensor::<f64>::randn(&[5, cfg.hidden_dim], &mut rng);
    let rope = RopeTables::new(&normalize_coords(&seq.coords, &cfg), &cfg).unwrap();
    let block = &model.blocks[0];
    let out = block.forward(&x, &block.modulation(&model.time_conditioning(&seq.timesteps)), &rope, &cap);
    assert_eq!(out.data(), x.data());

    model.proj_out = vidiff::layers::Linear::new(cfg.hidden_dim, cfg.latent_channels, &mut rng);
    let out = dit_forward(&seq, &cap, &model).unwrap();
    let expect = model.proj_out.forward(&model.proj_in.forward(&seq.tokens).rms_norm(None, 1e-6));
    for (a, b) in out.data().iter().zip(expect.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn permuting_tokens_permutes_output() {
    let (model, seq, cap) = model_and_inputs(11);
    let out = model.forward(&seq, &cap).unwrap();
    let perm = [3, 0, 5, 1, 4, 2];
    let out_p = model.forward(&seq.select(&perm), &cap).unwrap();
    let c = model.cfg.latent_channels;
    for (k, &i) in perm.iter().enumerate() {
        for j in 0..c {
            assert!((out_p.data()[k * c + j] - out.data()[i * c + j]).abs() < 1e-10);
        }
    }
}

#[test]
fn gradient_check_on_sampled_parameters() {
    let (mut model, seq, cap) = model_and_inputs(12);
    let names: Vec<(String, usize)> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.numel()))
        .collect();
    let total: usize = names.iter().map(|(_, n)| n).sum();
    let mut rng = Rng::seeded(99);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (name, numel) in &names {
        let want = (numel / 100).max(1);
        let coords: Vec<usize> = (0..want).map(|_| rng.below(*numel)).collect();
        let base = model.clone();
        let name = name.clone();
        let f = |p: &Tensor<f64>| {
            let mut m = base.clone();
            m.visit("", &mut |n, t| {
                if n == name {
                    *t = p.clone();
                }
            });
            m.forward(&seq, &cap).unwrap().square().mean()
        };
        let param = model.named_params().into_iter().find(|(n, _)| *n == name).unwrap().1;
        let chk = finite_difference_check(f, &param, 1e-5, Some(&coords)).unwrap();
        worst = worst.max(chk.max_rel_error);
        checked += chk.checked;
    }
    assert!(checked * 100 >= total, "{checked} of {total}");
    assert!(worst < 1e-3, "worst relative error {worst}");
}
