//! Oracles shared by the integration suites.
#![allow(dead_code)]

use mscanet::tensor::{ConvSpec, Shape, Tape, Tensor, Var};
use mscanet::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor<f64> {
    let data = (0..shape.numel()).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Largest deviation between two gradients, relative to the larger of
/// their peak magnitudes.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let peak = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / peak
}

pub const FD_STEP: f64 = 1e-6;

/// The assembled network is piecewise smooth with kinks closer together
/// than `FD_STEP`, so whole-model checks take a smaller step.
pub const FD_STEP_MODEL: f64 = 1e-7;

/// Central-difference check of `build` with respect to every entry of
/// every input. Non-scalar outputs are reduced against a fixed random
/// projection. Returns the worst relative error over the inputs.
pub fn check_op(inputs: &[Tensor<f64>], seed: u64, build: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>) -> f64 {
    let mut proj: Option<Tensor<f64>> = None;
    let mut eval = |xs: &[Tensor<f64>], grads: bool| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone().with_requires_grad(true))).collect();
        let out = build(&mut tape, &vars).unwrap();
        let shape = tape.shape(out);
        let p = proj.get_or_insert_with(|| uniform(&mut rng(seed), shape, -1.0, 1.0)).clone();
        let pv = tape.constant(p);
        let prod = tape.mul(out, pv).unwrap();
        let loss = tape.sum(prod);
        let value = tape.value(loss).data()[0];
        if !grads {
            return (value, Vec::new());
        }
        let g = tape.backward(loss).unwrap();
        let gs = vars
            .iter()
            .zip(xs)
            .map(|(v, x)| g.get(*v).map(<[f64]>::to_vec).unwrap_or(vec![0.0; x.data().len()]))
            .collect();
        (value, gs)
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst = 0.0f64;
    for (k, x) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; x.data().len()];
        for i in 0..numeric.len() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] += FD_STEP;
            let up = eval(&xs, false).0;
            xs[k].data_mut()[i] -= 2.0 * FD_STEP;
            let down = eval(&xs, false).0;
            numeric[i] = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_error(&analytic[k], &numeric));
    }
    worst
}

/// Direct sliding-window convolution with zero padding.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, spec: ConvSpec) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let span = spec.dilation * (spec.kernel - 1) + 1;
    let oh = (xs.h + 2 * spec.padding - span) / spec.stride + 1;
    let ow = (xs.w + 2 * spec.padding - span) / spec.stride + 1;
    Tensor::from_fn(Shape::new(xs.n, ws.n, oh, ow), |n, co, oy, ox| {
        let mut acc = b.map_or(0.0, |b| b.data()[co]);
        for ci in 0..ws.c {
            for ky in 0..spec.kernel {
                for kx in 0..spec.kernel {
                    let iy = (oy * spec.stride + ky * spec.dilation) as isize - spec.padding as isize;
                    let ix = (ox * spec.stride + kx * spec.dilation) as isize - spec.padding as isize;
                    if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                        continue;
                    }
                    acc += x.at(n, ci, iy as usize, ix as usize) * w.at(co, ci, ky, kx);
                }
            }
        }
        acc
    })
}

use mscanet::data::{generate_scene, Sample, SceneSpec};
use mscanet::density::KernelChoice;
use mscanet::loss::{combined_loss, density_loss, DensityDivisor, LossWeights};
use mscanet::model::{ForwardOptions, Model, ModelConfig, Variant};

/// Two 16x16 scenes for whole-model checks.
pub fn tiny_batch(seed: u64) -> Vec<Sample> {
    (0..2)
        .map(|i| {
            let scene = generate_scene(&SceneSpec {
                seed: seed + i,
                width: 16,
                height: 16,
                n_heads: 3,
                head_radius: 1.5,
                margin: Some(2.0),
                ..Default::default()
            })
            .unwrap();
            Sample::from_scene(scene, KernelChoice::Fixed { sigma: 1.5 }).unwrap()
        })
        .collect()
}

fn stack(ts: Vec<Tensor<f64>>) -> Tensor<f64> {
    Tensor::stack(&ts.iter().collect::<Vec<_>>()).unwrap()
}

/// Training loss of `model` on `batch` with batch-norm statistics frozen,
/// plus gradients for every parameter and for the input when requested.
pub fn model_loss(model: &Model<f64>, batch: &[Sample], grads: bool) -> (f64, Vec<Option<Vec<f64>>>, Vec<f64>) {
    let x = stack(batch.iter().map(|s| s.scene.image.to_tensor()).collect());
    let stride = model.output_stride();
    let gt = stack(batch.iter().map(|s| s.density_at(stride).unwrap().to_tensor()).collect());
    let mut sess = model.frozen_session(ForwardOptions::train());
    let xv = sess.input(x.with_requires_grad(true));
    let out = sess.forward(xv).unwrap();
    let mut tape = sess.into_tape();
    let loss = match out.attention {
        Some(att) => {
            let masks: Vec<Tensor<f64>> = (0..3)
                .map(|k| stack(batch.iter().map(|s| s.masks[k].to_tensor()).collect()))
                .collect();
            let pairs: Vec<_> = att.iter().copied().zip(masks.iter()).collect();
            // heavier attention weights so those branches are not drowned out
            let w = LossWeights {
                lambda1: 0.5,
                lambda2: 0.3,
                lambda3: 0.2,
            };
            combined_loss(&mut tape, (out.density, &gt), &pairs, &w, DensityDivisor::TwiceBatch)
                .unwrap()
                .total
        }
        None => density_loss(&mut tape, out.density, &gt, DensityDivisor::TwiceBatch).unwrap(),
    };
    let value = tape.value(loss).data()[0];
    if !grads {
        return (value, Vec::new(), Vec::new());
    }
    let g = tape.backward(loss).unwrap();
    let dx = g.get(xv).unwrap().to_vec();
    (value, g.into_param_grads(model.params().len()), dx)
}

pub struct ModelCheck {
    pub worst: f64,
    pub worst_param: String,
    pub entries: usize,
    pub params_without_grad: Vec<String>,
}

/// Finite-difference check of the whole model at width 1/16. Samples
/// `per_tensor` entries of each parameter tensor and of the input; each
/// error is relative to the peak analytic gradient of its tensor.
pub fn check_model(variant: Variant, seed: u64, per_tensor: usize) -> ModelCheck {
    let cfg = ModelConfig::desk().with_width(1.0 / 16.0).with_variant(variant);
    let mut model = Model::<f64>::new(cfg, seed, 0.1).unwrap();
    let mut r = rng(seed ^ 0xfd);
    // zero biases put pixels with all-zero features exactly on a ReLU kink
    for id in 0..model.params().len() {
        let name = model.params().name(id);
        if name.ends_with(".bias") || name.ends_with(".beta") {
            for v in model.params_mut().get_mut(id).data_mut() {
                *v += r.gen_range(-0.1..0.1);
            }
        }
    }
    let batch = tiny_batch(seed);
    let (_, grads, dx) = model_loss(&model, &batch, true);
    let mut out = ModelCheck {
        worst: 0.0,
        worst_param: String::new(),
        entries: 0,
        params_without_grad: Vec::new(),
    };
    for id in 0..model.params().len() {
        let name = model.params().name(id).to_string();
        let Some(g) = grads[id].clone() else {
            out.params_without_grad.push(name);
            continue;
        };
        let peak = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for _ in 0..per_tensor.min(g.len()) {
            let i = r.gen_range(0..g.len());
            let orig = model.params().get(id).data()[i];
            model.params_mut().get_mut(id).data_mut()[i] = orig + FD_STEP_MODEL;
            let up = model_loss(&model, &batch, false).0;
            model.params_mut().get_mut(id).data_mut()[i] = orig - FD_STEP_MODEL;
            let down = model_loss(&model, &batch, false).0;
            model.params_mut().get_mut(id).data_mut()[i] = orig;
            let e = (g[i] - (up - down) / (2.0 * FD_STEP_MODEL)).abs() / peak;
            out.entries += 1;
            if e > out.worst {
                out.worst = e;
                out.worst_param = name.clone();
            }
        }
    }
    // the input gradient, through a perturbed copy of the batch
    let peak = dx.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let plane = 16 * 16;
    for _ in 0..per_tensor {
        let i = r.gen_range(0..dx.len());
        let (n, p) = (i / plane, i % plane);
        let mut b = batch.clone();
        b[n].scene.image.data[p] += FD_STEP_MODEL;
        let up = model_loss(&model, &b, false).0;
        b[n].scene.image.data[p] -= 2.0 * FD_STEP_MODEL;
        let down = model_loss(&model, &b, false).0;
        let e = (dx[i] - (up - down) / (2.0 * FD_STEP_MODEL)).abs() / peak;
        out.entries += 1;
        if e > out.worst {
            out.worst = e;
            out.worst_param = "input".into();
        }
    }
    out
}

use mscanet::density::DensityMap;

/// A random convolution problem with dilation `d` and a non-empty output.
pub fn random_conv_case(r: &mut ChaCha8Rng, d: usize) -> (Tensor<f64>, Tensor<f64>, Option<Tensor<f64>>, ConvSpec) {
    let kernel = [1, 3, 3, 5][r.gen_range(0..4)];
    let stride = r.gen_range(1..=2);
    let padding = r.gen_range(0..=(kernel / 2) * d);
    let span = d * (kernel - 1) + 1;
    let lo = span.saturating_sub(2 * padding).max(1);
    let h = r.gen_range(lo..lo + 8);
    let w = r.gen_range(lo..lo + 8);
    let (n, cin, cout) = (r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(1..=4));
    let x = uniform(r, Shape::new(n, cin, h, w), -1.0, 1.0);
    let wt = uniform(r, Shape::new(cout, cin, kernel, kernel), -1.0, 1.0);
    let b = r.gen_bool(0.5).then(|| uniform(r, Shape::new(cout, 1, 1, 1), -1.0, 1.0));
    (
        x,
        wt,
        b,
        ConvSpec {
            kernel,
            dilation: d,
            stride,
            padding,
        },
    )
}

pub fn random_map(r: &mut ChaCha8Rng, w: usize, h: usize) -> DensityMap {
    DensityMap {
        width: w,
        height: h,
        stride: 1,
        values: (0..w * h).map(|_| r.gen_range(0.0..1.0)).collect(),
    }
}

/// PSNR straight from its definition, GT peak mapped to 1.
pub fn psnr_oracle(p: &DensityMap, g: &DensityMap) -> f64 {
    let peak = g.values.iter().cloned().fold(0.0, f64::max);
    let mse = p
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| ((a - b) / peak).powi(2))
        .sum::<f64>()
        / p.values.len() as f64;
    if mse < 1e-10 {
        100.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(100.0)
    }
}

/// SSIM with explicit 2-D Gaussian weights at every valid window position.
pub fn ssim_oracle(p: &DensityMap, g: &DensityMap, win: usize) -> f64 {
    let peak = g.values.iter().cloned().fold(0.0, f64::max);
    let (w, h) = (g.width, g.height);
    let c = (win as f64 - 1.0) / 2.0;
    let mut k = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            k[i * win + j] = (-d2 / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let ks: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= ks);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - win {
        for x0 in 0..=w - win {
            let (mut mp, mut mg) = (0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let idx = (y0 + i) * w + x0 + j;
                    mp += k[i * win + j] * p.values[idx] / peak;
                    mg += k[i * win + j] * g.values[idx] / peak;
                }
            }
            let (mut vp, mut vg, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let idx = (y0 + i) * w + x0 + j;
                    let a = p.values[idx] / peak - mp;
                    let b = g.values[idx] / peak - mg;
                    vp += k[i * win + j] * a * a;
                    vg += k[i * win + j] * b * b;
                    cov += k[i * win + j] * a * b;
                }
            }
            total += ((2.0 * mp * mg + c1) * (2.0 * cov + c2)) / ((mp * mp + mg * mg + c1) * (vp + vg + c2));
            count += 1;
        }
    }
    total / count as f64
}
