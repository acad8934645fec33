use crate::dit::{apply_rope, normalize_coords, Dit, DitConfig, TokenSequence};
use crate::error::Result;
use crate::flow::flow_loss_with;
use crate::layers::Module;
use crate::losses::{discriminator_hinge, dwt3d_haar, dwt_loss, kl_uniform_logvar, rgan_losses, total_vae_loss, DiscriminatorBatch, RganDiscriminator, VaeLossWeights};
use crate::rng::Rng;
use crate::tensor::{causal_conv3d, finite_difference_check, no_grad, Tensor};
use crate::vae::{patchify, unpatchify, LatentPosterior, VaeConfig, VideoTensor, VideoVae};

pub const GRAD_TOLERANCE: f64 = 1e-3;
pub const GRAD_STEP: f64 = 1e-5;
/// Coordinates probed per case; smaller inputs are checked in full.
pub const MAX_COORDS: usize = 48;

type Op = Box<dyn Fn(&Tensor<f64>) -> Tensor<f64>>;

struct Case {
    name: &'static str,
    x: Tensor<f64>,
    op: Op,
}

fn case(name: &'static str, x: Tensor<f64>, op: impl Fn(&Tensor<f64>) -> Tensor<f64> + 'static) -> Case {
    Case { name, x, op: Box::new(op) }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCaseResult {
    pub name: String,
    pub seed: u64,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradCaseResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

pub fn gradient_csv(results: &[GradCaseResult]) -> String {
    let mut s = String::from("case,seed,max_rel_error,checked\n");
    for r in results {
        s.push_str(&format!("{},{},{:e},{}\n", r.name, r.seed, r.max_rel_error, r.checked));
    }
    s
}

/// Normal draws kept at least `margin` away from every kink.
fn away(rng: &mut Rng, shape: &[usize], kinks: &[f64], margin: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let v = rng.normal();
        if kinks.iter().all(|k| (v - k).abs() > margin) {
            data.push(v);
        }
    }
    Tensor::new(shape, data)
}

fn positive(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform_range(0.5, 1.5)).collect())
}

fn pack(parts: &[&Tensor<f64>]) -> Tensor<f64> {
    Tensor::new(&[parts.iter().map(|p| p.numel()).sum()], parts.iter().flat_map(|p| p.data().iter().copied()).collect())
}

/// Inverse of [`pack`] for the given shapes.
fn unpack(p: &Tensor<f64>, shapes: &[&[usize]]) -> Vec<Tensor<f64>> {
    let mut off = 0;
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let t = p.narrow(0, off, n).reshape(s);
            off += n;
            t
        })
        .collect()
}

fn flat_params<M: Module<f64>>(m: &mut M) -> Tensor<f64> {
    let mut data = Vec::new();
    m.visit("", &mut |_, t| data.extend_from_slice(t.data()));
    Tensor::new(&[data.len()], data)
}

/// Copy of `m` whose parameters are slices of `p`, so gradients reach `p`.
fn with_params<M: Module<f64> + Clone>(m: &M, p: &Tensor<f64>) -> M {
    let mut m = m.clone();
    let mut off = 0;
    m.visit("", &mut |_, t| {
        let shape = t.shape().to_vec();
        let n = t.numel();
        *t = p.narrow(0, off, n).reshape(&shape);
        off += n;
    });
    m
}

fn jitter<M: Module<f64>>(m: &mut M, std: f64, rng: &mut Rng) {
    m.visit("", &mut |_, t| {
        let d = t.data().iter().map(|v| v + std * rng.normal()).collect();
        *t = Tensor::param(t.shape(), d);
    });
}

fn tiny_vae() -> VaeConfig {
    VaeConfig {
        spatial_factor: 4,
        temporal_factor: 1,
        latent_channels: 4,
        patch_spatial: 2,
        patch_temporal: 1,
        enc_channels: vec![4, 4],
        dec_channels: vec![4, 4],
        noise_inject_stages: vec![0, 1],
        norm_groups: 2,
        time_embed_dim: 8,
    }
}

fn tiny_dit() -> DitConfig {
    let mut c = DitConfig::desk();
    c.hidden_dim = 16;
    c.heads = 2;
    c.blocks = 1;
    c.latent_channels = 3;
    c.text_dim = 4;
    c.vocab_size = 5;
    c.time_embed_dim = 8;
    c
}

fn elementwise(rng: &mut Rng) -> Vec<Case> {
    let s = [2, 3, 4];
    let stacked = |rng: &mut Rng| pack(&[&Tensor::randn(&s, rng), &Tensor::randn(&s, rng)]);
    let halves = move |p: &Tensor<f64>| {
        let v = unpack(p, &[&s, &s]);
        (v[0].clone(), v[1].clone())
    };
    let bias = Tensor::<f64>::randn(&s, rng);
    let factor = Tensor::<f64>::randn(&s, rng);
    vec![
        case("add", stacked(rng), move |p| {
            let (a, b) = halves(p);
            a.add(&b)
        }),
        case("sub", stacked(rng), move |p| {
            let (a, b) = halves(p);
            a.sub(&b)
        }),
        case("mul", stacked(rng), move |p| {
            let (a, b) = halves(p);
            a.mul(&b)
        }),
        case("div", pack(&[&Tensor::randn(&s, rng), &positive(rng, &s)]), move |p| {
            let (a, b) = halves(p);
            a.div(&b)
        }),
        case("add_broadcast", Tensor::randn(&[2, 1, 4], rng), move |p| bias.add(p)),
        case("mul_broadcast", Tensor::randn(&[1, 3, 1], rng), move |p| factor.mul(p)),
        case("neg", Tensor::randn(&s, rng), |p| p.neg()),
        case("exp", Tensor::randn(&s, rng), |p| p.exp()),
        case("ln", positive(rng, &s), |p| p.ln()),
        case("sqrt", positive(rng, &s), |p| p.sqrt()),
        case("square", Tensor::randn(&s, rng), |p| p.square()),
        case("abs", away(rng, &s, &[0.0], 0.05), |p| p.abs()),
        case("relu", away(rng, &s, &[0.0], 0.05), |p| p.relu()),
        case("sigmoid", Tensor::randn(&s, rng), |p| p.sigmoid()),
        case("silu", Tensor::randn(&s, rng), |p| p.silu()),
        case("tanh", Tensor::randn(&s, rng), |p| p.tanh()),
        case("gelu", Tensor::randn(&s, rng), |p| p.gelu()),
        case("clamp", away(rng, &s, &[-0.5, 0.5], 0.05), |p| p.clamp(-0.5, 0.5)),
        case("scale", Tensor::randn(&s, rng), |p| p.scale(-1.7)),
        case("add_scalar", Tensor::randn(&s, rng), |p| p.add_scalar(0.3).square()),
    ]
}

fn structural(rng: &mut Rng) -> Vec<Case> {
    let s = [2, 3, 4];
    let (ma, mb) = ([3usize, 4usize], [4usize, 5usize]);
    let rows = Tensor::<f64>::randn(&[3, 4], rng);
    vec![
        case("sum", Tensor::randn(&s, rng), |p| p.sum()),
        case("mean", Tensor::randn(&s, rng), |p| p.mean()),
        case("sum_axis", Tensor::randn(&s, rng), |p| p.sum_axis(1)),
        case("mean_axis", Tensor::randn(&s, rng), |p| p.mean_axis(0)),
        case("reshape", Tensor::randn(&s, rng), |p| p.reshape(&[4, 6]).square()),
        case("permute", Tensor::randn(&s, rng), |p| p.permute(&[2, 0, 1]).square()),
        case("transpose_last", Tensor::randn(&s, rng), |p| p.transpose_last().square()),
        case("narrow", Tensor::randn(&s, rng), |p| p.narrow(2, 1, 2).square()),
        case("concat", Tensor::randn(&s, rng), |p| Tensor::concat(&[p.narrow(1, 2, 1), p.narrow(1, 0, 2).exp()], 1)),
        case("index_select", Tensor::randn(&s, rng), |p| p.index_select(&[1, 0, 1, 1]).square()),
        case("matmul", pack(&[&Tensor::randn(&ma, rng), &Tensor::randn(&mb, rng)]), move |p| {
            let v = unpack(p, &[&ma, &mb]);
            v[0].matmul(&v[1])
        }),
        case("matmul_t", pack(&[&Tensor::randn(&[3, 4], rng), &Tensor::randn(&[5, 4], rng)]), |p| {
            let v = unpack(p, &[&[3, 4], &[5, 4]]);
            v[0].matmul_t(&v[1])
        }),
        case("matmul_batched", Tensor::randn(&[2, 3, 3], rng), move |p| p.matmul(&rows)),
        case(
            "linear",
            pack(&[&Tensor::randn(&[2, 3, 4], rng), &Tensor::randn(&[4, 2], rng), &Tensor::randn(&[2], rng)]),
            |p| {
                let v = unpack(p, &[&[2, 3, 4], &[4, 2], &[2]]);
                v[0].linear(&v[1], Some(&v[2]))
            },
        ),
        case("softmax", Tensor::randn(&s, rng), |p| p.softmax()),
        case("mse", pack(&[&Tensor::randn(&s, rng), &Tensor::randn(&s, rng)]), move |p| {
            let v = unpack(p, &[&s, &s]);
            v[0].mse(&v[1])
        }),
        case("l1", pack(&[&away(rng, &s, &[0.0], 0.05), &Tensor::zeros(&s)]), move |p| {
            let v = unpack(p, &[&s, &s]);
            v[0].l1(&v[1])
        }),
    ]
}

fn neural(rng: &mut Rng) -> Vec<Case> {
    let (xs, ks) = ([5usize, 4, 4, 2], [3usize, 3, 3, 2, 3]);
    let conv_x = pack(&[&Tensor::randn(&xs, rng), &Tensor::randn(&ks, rng), &Tensor::randn(&[3], rng)]);
    let conv = move |stride: (usize, usize, usize)| {
        move |p: &Tensor<f64>| {
            let v = unpack(p, &[&xs, &ks, &[3]]);
            causal_conv3d(&v[0], &v[1], Some(&v[2]), stride).expect("valid conv case")
        }
    };
    let angles: Vec<f64> = (0..3 * 2).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    let cos: Vec<f64> = angles.iter().map(|a| a.cos()).collect();
    let sin: Vec<f64> = angles.iter().map(|a| a.sin()).collect();
    let dit = tiny_dit();
    let coords: Vec<[f64; 3]> = (0..3).map(|_| [rng.uniform(), rng.uniform() * 60.0, rng.uniform() * 60.0]).collect();
    let coords = normalize_coords(&coords, &dit);
    vec![
        case("causal_conv3d", conv_x.clone(), conv((1, 1, 1))),
        case("causal_conv3d_strided", conv_x, conv((2, 2, 2))),
        case("rms_norm", pack(&[&Tensor::randn(&[3, 8], rng), &Tensor::randn(&[8], rng)]), |p| {
            let v = unpack(p, &[&[3, 8], &[8]]);
            v[0].rms_norm(Some(&v[1]), 1e-6)
        }),
        case("group_norm", Tensor::randn(&[2, 3, 3, 4], rng), |p| p.group_norm(2, 1e-6)),
        case("rotate_pairs", Tensor::randn(&[3, 2, 4], rng), move |p| p.rotate_pairs(&cos, &sin)),
        case("apply_rope", Tensor::randn(&[3, dit.heads, dit.head_dim()], rng), move |p| {
            apply_rope(p, &coords, &dit).expect("valid rope case")
        }),
        case("patchify", Tensor::randn(&[3, 4, 4, 3], rng), |p| patchify(p, 2, 2).expect("valid patch case")),
        case("unpatchify", Tensor::randn(&[2, 2, 2, 24], rng), |p| {
            unpatchify(p, 2, 2, 3).expect("valid patch case")
        }),
    ]
}

fn losses(rng: &mut Rng) -> Vec<Case> {
    let s = [3, 4, 4, 2];
    let target = Tensor::<f64>::randn(&s, rng);
    let t2 = target.clone();
    let mut disc = RganDiscriminator::<f64>::new(4, rng);
    jitter(&mut disc, 0.05, rng);
    let clip = Tensor::<f64>::new(&[3, 8, 8, 3], (0..3 * 64 * 3).map(|_| rng.uniform()).collect());
    let recon_seed = rng.next_u64();
    let d_for_g = disc.clone();
    let c2 = clip.clone();
    let c3 = clip.clone();
    let recon = clip.add(&Tensor::randn(clip.shape(), rng).scale(0.3));
    let r2 = recon.clone();
    let disc_params = flat_params(&mut disc);
    let d_for_d = disc.clone();
    vec![
        case("dwt3d_haar", Tensor::randn(&[4, 4, 4, 2], rng), |p| {
            let bands = dwt3d_haar(p).bands;
            Tensor::concat(&bands.iter().map(|b| b.reshape(&[b.numel()])).collect::<Vec<_>>(), 0)
        }),
        case("dwt3d_haar_odd", Tensor::randn(&[3, 5, 4, 1], rng), |p| {
            let bands = dwt3d_haar(p).bands;
            Tensor::concat(&bands.iter().map(|b| b.reshape(&[b.numel()])).collect::<Vec<_>>(), 0)
        }),
        case("dwt_loss", target.add(&away(rng, &s, &[0.0], 0.05)), move |p| {
            dwt_loss(&t2, p).expect("valid dwt case")
        }),
        case("kl_uniform_logvar", pack(&[&Tensor::randn(&[1, 2, 2, 3], rng), &Tensor::randn(&[1, 2, 2, 1], rng)]), |p| {
            let v = unpack(p, &[&[1, 2, 2, 3], &[1, 2, 2, 1]]);
            kl_uniform_logvar(&LatentPosterior::new(v[0].clone(), v[1].clone(), 1.0).expect("valid posterior"))
        }),
        case("rgan_g_loss", recon, move |p| {
            let mut r = Rng::seeded(recon_seed);
            rgan_losses(&[c2.clone()], &[p.clone()], &d_for_g, &mut r).expect("valid pair").g_loss
        }),
        case("rgan_d_hinge", disc_params, move |p| {
            let d = with_params(&d_for_d, p);
            let batch = DiscriminatorBatch {
                a: c3.clone(),
                b: r2.clone(),
                a_is_original: true,
            };
            discriminator_hinge(&batch, &d).expect("valid pair").0
        }),
    ]
}

fn models(rng: &mut Rng) -> Result<Vec<Case>> {
    let vcfg = tiny_vae();
    let mut vae = VideoVae::<f64>::new(vcfg, rng)?;
    vae.decoder.set_noise_scales(0.1);
    jitter(&mut vae, 0.05, rng);
    let mut disc = RganDiscriminator::<f64>::new(4, rng);
    jitter(&mut disc, 0.05, rng);
    let clip = Tensor::<f64>::new(&[2, 8, 8, 3], (0..2 * 64 * 3).map(|_| rng.uniform()).collect());
    let loss_seed = rng.next_u64();
    let t = rng.uniform_range(0.0, 0.2);
    let vae_params = flat_params(&mut vae);
    let (v1, d1, c1) = (vae.clone(), disc.clone(), clip.clone());
    let (v2, d2) = (vae.clone(), disc);
    let vae_loss = move |vae: &VideoVae<f64>, d: &RganDiscriminator<f64>, x: &Tensor<f64>| {
        let x = VideoTensor::new(x.clone(), 8.0).expect("valid clip");
        let mut r = Rng::seeded(loss_seed);
        total_vae_loss(&x, t, &mut r, &VaeLossWeights::default(), vae, Some(d), None)
            .expect("valid vae case")
            .loss
    };

    let dcfg = tiny_dit();
    let mut dit = Dit::<f64>::new(dcfg, rng)?;
    jitter(&mut dit, 0.1, rng);
    let z0 = Tensor::<f64>::randn(&[4, 3], rng);
    let coords: Vec<[f64; 3]> = (0..4).map(|i| [0.1 * (i / 2) as f64, 8.0 * (i % 2) as f64 + 4.0, 4.0]).collect();
    let ts: Vec<f64> = (0..4).map(|_| rng.uniform_range(0.05, 0.95)).collect();
    let seq = TokenSequence::new(z0.clone(), coords, ts.clone(), 12.0, [2, 2, 1])?;
    let eps = Tensor::<f64>::randn(&[4, 3], rng);
    let dit_params = flat_params(&mut dit);
    let (dit2, seq2) = (dit.clone(), seq.clone());
    Ok(vec![
        case("vae_loss_pixels", clip, move |p| vae_loss(&v1, &d1, p)),
        case("vae_loss_params", vae_params, move |p| vae_loss(&with_params(&v2, p), &d2, &c1)),
        case("dit_flow_loss_params", dit_params, move |p| {
            let m = with_params(&dit, p);
            let cap = m.embed_caption(&[1, 2, 3], &[true, true, false]).expect("valid caption");
            flow_loss_with(&m, &seq, &cap, &ts, &eps, None).expect("valid flow case")
        }),
        case("dit_forward_tokens", z0, move |p| {
            let cap = dit2.embed_caption(&[4], &[true]).expect("valid caption");
            dit2.forward(&seq2.with_tokens(p.clone()), &cap).expect("valid dit case")
        }),
    ])
}

fn all_cases(rng: &mut Rng) -> Result<Vec<Case>> {
    let mut v = elementwise(rng);
    v.extend(structural(rng));
    v.extend(neural(rng));
    v.extend(losses(rng));
    v.extend(models(rng)?);
    Ok(v)
}

pub fn gradient_case_names() -> Vec<&'static str> {
    all_cases(&mut Rng::seeded(0)).expect("fixed cases build").iter().map(|c| c.name).collect()
}

/// Finite-difference checks (f64, central differences of step [`GRAD_STEP`])
/// of every differentiable operation, on fresh random inputs per seed. Each
/// case contracts its output with a random weight tensor so that every output
/// entry contributes.
pub fn gradient_suite(seeds: &[u64]) -> Result<Vec<GradCaseResult>> {
    let mut out = Vec::new();
    for &seed in seeds {
        let mut rng = Rng::seeded(seed);
        for c in all_cases(&mut rng)? {
            let y0 = no_grad(|| (c.op)(&c.x));
            let w = Tensor::<f64>::randn(y0.shape(), &mut rng);
            let op = &c.op;
            let f = |p: &Tensor<f64>| op(p).mul(&w).sum();
            let n = c.x.numel();
            let coords: Vec<usize> = if n <= MAX_COORDS {
                (0..n).collect()
            } else {
                let mut idx: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut idx);
                idx.truncate(MAX_COORDS);
                idx
            };
            let chk = finite_difference_check(f, &c.x, GRAD_STEP, Some(&coords))?;
            out.push(GradCaseResult {
                name: c.name.to_string(),
                seed,
                max_rel_error: chk.max_rel_error,
                checked: chk.checked,
            });
        }
    }
    Ok(out)
}
