//! Central-difference checks of every differentiable tape operation and
//! of the assembled model, all in f64.

mod common;

use common::{check_model, check_op, rng, uniform};
use mscanet::model::Variant;
use mscanet::tensor::{BatchNormConfig, BnMode, BnRunning, ConvSpec, Shape, Tensor};
use rand::Rng;

const TOL: f64 = 1e-4;

/// Values bounded away from zero so ReLU kinks are never crossed.
fn away_from_zero(seed: u64, shape: Shape) -> Tensor<f64> {
    let mut r = rng(seed);
    let data = (0..shape.numel())
        .map(|_| {
            let v: f64 = r.gen_range(0.1..1.0);
            if r.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

#[test]
fn conv2d_all_inputs() {
    for (i, (dilation, stride)) in [(1, 1), (2, 1), (1, 2), (3, 2)].into_iter().enumerate() {
        let mut r = rng(i as u64);
        let spec = ConvSpec {
            kernel: 3,
            dilation,
            stride,
            padding: dilation,
        };
        let x = uniform(&mut r, Shape::new(2, 3, 7, 6), -1.0, 1.0);
        let w = uniform(&mut r, Shape::new(4, 3, 3, 3), -1.0, 1.0);
        let b = uniform(&mut r, Shape::new(1, 4, 1, 1), -1.0, 1.0);
        let e = check_op(&[x, w, b], 1, |t, v| t.conv2d(v[0], v[1], Some(v[2]), spec));
        assert!(e < TOL, "dilation {dilation} stride {stride}: {e}");
    }
}

#[test]
fn batchnorm_train_and_eval() {
    let mut r = rng(2);
    let x = uniform(&mut r, Shape::new(2, 3, 4, 4), -2.0, 2.0);
    let g = uniform(&mut r, Shape::new(1, 3, 1, 1), 0.5, 1.5);
    let b = uniform(&mut r, Shape::new(1, 3, 1, 1), -0.5, 0.5);
    for mode in [BnMode::Train, BnMode::Eval] {
        let running = BnRunning {
            mean: vec![0.1, -0.2, 0.3],
            var: vec![0.5, 1.5, 2.0],
        };
        let e = check_op(&[x.clone(), g.clone(), b.clone()], 3, |t, v| {
            t.batchnorm2d_frozen(v[0], v[1], v[2], &running, mode, BatchNormConfig::default())
        });
        assert!(e < TOL, "{mode:?}: {e}");
    }
}

#[test]
fn pointwise_ops() {
    let x = away_from_zero(4, Shape::new(2, 2, 3, 3));
    assert!(check_op(&[x.clone()], 5, |t, v| Ok(t.relu(v[0]))) < TOL);
    assert!(check_op(&[x.clone()], 6, |t, v| Ok(t.sigmoid(v[0]))) < TOL);
    assert!(check_op(&[x], 7, |t, v| Ok(t.scale(v[0], -2.5))) < TOL);
}

#[test]
fn resampling_ops() {
    let mut r = rng(8);
    let x = uniform(&mut r, Shape::new(2, 2, 3, 4), -1.0, 1.0);
    assert!(check_op(&[x.clone()], 9, |t, v| t.bilinear_upsample(v[0], 2)) < TOL);
    assert!(check_op(&[x.clone()], 10, |t, v| t.resize_bilinear(v[0], 5, 7)) < TOL);
    assert!(check_op(&[x.clone()], 11, |t, v| Ok(t.global_avg_pool(v[0]))) < TOL);
    let y = uniform(&mut r, Shape::new(2, 2, 4, 6), -1.0, 1.0);
    assert!(check_op(&[y], 12, |t, v| t.maxpool2(v[0])) < TOL);
}

#[test]
fn structural_ops() {
    let mut r = rng(13);
    let a = uniform(&mut r, Shape::new(2, 2, 3, 3), -1.0, 1.0);
    let b = uniform(&mut r, Shape::new(2, 3, 3, 3), -1.0, 1.0);
    let m = uniform(&mut r, Shape::new(2, 1, 3, 3), 0.0, 1.0);
    let a2 = uniform(&mut r, Shape::new(2, 2, 3, 3), -1.0, 1.0);
    assert!(check_op(&[a.clone(), b.clone()], 14, |t, v| t.concat_channels(&[v[0], v[1]])) < TOL);
    assert!(check_op(&[b], 15, |t, v| t.slice_channels(v[0], 1, 2)) < TOL);
    assert!(check_op(&[a.clone(), a2.clone()], 16, |t, v| t.mul(v[0], v[1])) < TOL);
    assert!(check_op(&[a.clone(), m.clone()], 17, |t, v| t.mul(v[0], v[1])) < TOL);
    assert!(check_op(&[a.clone(), a2], 18, |t, v| t.add(v[0], v[1])) < TOL);
    assert!(check_op(&[a.clone(), m], 19, |t, v| t.add(v[0], v[1])) < TOL);
    assert!(check_op(&[a], 20, |t, v| Ok(t.sum(v[0]))) < TOL);
}

#[test]
fn loss_ops() {
    let mut r = rng(21);
    let p = uniform(&mut r, Shape::new(2, 1, 3, 3), 0.1, 0.9);
    let target = Tensor::from_fn(Shape::new(2, 1, 3, 3), |_, _, y, x| ((x + y) % 2) as f64);
    assert!(check_op(&[p.clone()], 22, |t, v| t.bce(v[0], &target)) < TOL);
    let d = uniform(&mut r, Shape::new(2, 1, 3, 3), 0.0, 0.4);
    assert!(check_op(&[p.clone()], 23, |t, v| t.squared_error(v[0], &d, 4.0)) < TOL);
    let q = uniform(&mut r, Shape::new(1, 1, 1, 1), -1.0, 1.0);
    let s = uniform(&mut r, Shape::new(1, 1, 1, 1), -1.0, 1.0);
    assert!(check_op(&[q, s], 24, |t, v| t.weighted_sum(&[(v[0], 0.3), (v[1], 1e-2)])) < TOL);
}

#[test]
fn whole_model_gradients() {
    for v in [Variant::Full, Variant::NoHag, Variant::Backbone] {
        let c = check_model(v, 3, 2);
        assert!(c.params_without_grad.is_empty(), "{:?}", c.params_without_grad);
        assert!(c.worst < 1e-3, "{}: {} at {}", v.name(), c.worst, c.worst_param);
    }
}
