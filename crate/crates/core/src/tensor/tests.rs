use super::*;

fn t(shape: Shape, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

#[test]
fn relu_and_sigmoid_fixed_points() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(Shape::new(1, 1, 1, 3), &[-1.0, 2.0, 0.0]));
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 2.0, 0.0]);
    let s = tape.sigmoid(x);
    assert_eq!(tape.value(s).data()[2], 0.5);
}

#[test]
fn sigmoid_stays_open_interval() {
    let mut tape = Tape::<f32>::new();
    let x = Tensor::from_vec(Shape::new(1, 1, 1, 4), vec![-1e4f32, -100.0, 100.0, 1e4]).unwrap();
    let x = tape.constant(x);
    let s = tape.sigmoid(x);
    for &v in tape.value(s).data() {
        assert!(v > 0.0 && v < 1.0, "{v}");
    }
}

#[test]
fn upsample_constant_stays_constant() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::full(Shape::new(2, 3, 3, 5), 7.0));
    let y = tape.bilinear_upsample(x, 3).unwrap();
    assert_eq!(tape.shape(y), Shape::new(2, 3, 9, 15));
    assert!(tape.value(y).data().iter().all(|&v| (v - 7.0).abs() < 1e-12));
    assert!(tape.bilinear_upsample(x, 1).is_err());
}

#[test]
fn upsample_matches_half_pixel_oracle() {
    // Per axis, half-pixel sampling of [a, b] at scale 2 gives
    // [a, 0.75a + 0.25b, 0.25a + 0.75b, b]; the input is 2*row + col.
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(Shape::new(1, 1, 2, 2), &[0.0, 1.0, 2.0, 3.0]));
    let y = tape.bilinear_upsample(x, 2).unwrap();
    let expected = [
        0.0, 0.25, 0.75, 1.0, //
        0.5, 0.75, 1.25, 1.5, //
        1.5, 1.75, 2.25, 2.5, //
        2.0, 2.25, 2.75, 3.0,
    ];
    for (a, b) in tape.value(y).data().iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn global_average_pool_values() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]));
    let g = tape.global_avg_pool(x);
    assert_eq!(tape.value(g).data(), &[2.5]);
    let c = tape.constant(Tensor::full(Shape::new(2, 2, 3, 3), -1.5));
    let gc = tape.global_avg_pool(c);
    assert_eq!(tape.value(gc).data(), &[-1.5; 4]);
}

#[test]
fn concat_preserves_order_and_slices_back() {
    let mut tape = Tape::<f64>::new();
    let a = Tensor::from_fn(Shape::new(2, 2, 2, 2), |n, c, y, x| (n * 100 + c * 10 + y * 2 + x) as f64);
    let b = Tensor::from_fn(Shape::new(2, 3, 2, 2), |n, c, y, x| -((n * 100 + c * 10 + y * 2 + x) as f64));
    let va = tape.constant(a.clone());
    let vb = tape.constant(b.clone());
    let cat = tape.concat_channels(&[va, vb]).unwrap();
    assert_eq!(tape.shape(cat).c, 5);
    assert_eq!(tape.value(cat).at(1, 3, 1, 0), b.at(1, 1, 1, 0));
    let sa = tape.slice_channels(cat, 0, 2).unwrap();
    let sb = tape.slice_channels(cat, 2, 3).unwrap();
    assert_eq!(tape.value(sa).data(), a.data());
    assert_eq!(tape.value(sb).data(), b.data());

    let bad = tape.constant(Tensor::zeros(Shape::new(2, 1, 3, 2)));
    assert!(tape.concat_channels(&[va, bad]).is_err());
}

#[test]
fn maxpool_routes_gradient_to_argmax() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]).with_requires_grad(true));
    let p = tape.maxpool2(x).unwrap();
    assert_eq!(tape.value(p).data(), &[4.0]);
    let s = tape.sum(p);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &[0.0, 0.0, 0.0, 1.0]);

    let mut tape = Tape::<f64>::new();
    let odd = tape.constant(Tensor::zeros(Shape::new(1, 1, 3, 2)));
    assert!(tape.maxpool2(odd).is_err());
}

#[test]
fn mul_with_ones_mask_is_identity_and_broadcasts() {
    let mut tape = Tape::<f64>::new();
    let x = Tensor::from_fn(Shape::new(1, 3, 2, 2), |_, c, y, x| (c * 4 + y * 2 + x) as f64);
    let vx = tape.constant(x.clone());
    let ones = tape.constant(Tensor::full(Shape::new(1, 1, 2, 2), 1.0));
    let y = tape.mul(vx, ones).unwrap();
    assert_eq!(tape.value(y).data(), x.data());
    let wrong = tape.constant(Tensor::full(Shape::new(1, 2, 2, 2), 1.0));
    assert!(tape.mul(vx, wrong).is_err());
    assert!(tape.add(vx, wrong).is_err());
}

#[test]
fn batchnorm_fixed_points() {
    let shape = Shape::new(1, 1, 1, 4);
    let cfg = BatchNormConfig::default();

    // zero mean, unit (biased) variance input passes through
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(shape, &[-1.0, 1.0, -1.0, 1.0]));
    let g = tape.constant(Tensor::full(Shape::new(1, 1, 1, 1), 1.0));
    let b = tape.constant(Tensor::zeros(Shape::new(1, 1, 1, 1)));
    let mut running = BnRunning::new(1);
    let y = tape.batchnorm2d(x, g, b, &mut running, BnMode::Train, cfg).unwrap();
    for (a, e) in tape.value(y).data().iter().zip([-1.0, 1.0, -1.0, 1.0]) {
        assert!((a - e).abs() < 1e-4);
    }

    // constant input collapses to beta
    let c = tape.constant(Tensor::full(shape, 3.0));
    let five = tape.constant(Tensor::full(Shape::new(1, 1, 1, 1), 5.0));
    let y = tape.batchnorm2d(c, g, five, &mut running, BnMode::Train, cfg).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| (v - 5.0).abs() < 1e-12));

    // channel mismatch
    let mut wrong = BnRunning::new(2);
    assert!(tape.batchnorm2d(c, g, five, &mut wrong, BnMode::Eval, cfg).is_err());
}

#[test]
fn batchnorm_running_stats_update() {
    let cfg = BatchNormConfig::default();
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(Shape::new(1, 1, 1, 4), &[1.0, 2.0, 3.0, 4.0]));
    let g = tape.constant(Tensor::full(Shape::new(1, 1, 1, 1), 1.0));
    let b = tape.constant(Tensor::zeros(Shape::new(1, 1, 1, 1)));
    let mut running = BnRunning::new(1);
    tape.batchnorm2d(x, g, b, &mut running, BnMode::Train, cfg).unwrap();
    // mean 2.5, unbiased variance 5/3
    assert!((running.mean[0] - 0.25).abs() < 1e-12);
    assert!((running.var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
}

#[test]
fn backward_twice_is_an_error() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::full(Shape::new(1, 1, 2, 2), 1.0).with_requires_grad(true));
    let s = tape.sum(x);
    assert!(tape.backward(s).is_ok());
    assert!(tape.backward(s).is_err());
}

#[test]
fn backward_needs_scalar() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::full(Shape::new(1, 1, 2, 2), 1.0).with_requires_grad(true));
    assert!(tape.backward(x).is_err());
}

#[test]
fn zero_upstream_gradient_gives_zero_conv_gradients() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::from_fn(Shape::new(1, 2, 4, 4), |_, c, y, x| (c + y * x) as f64).with_requires_grad(true));
    let w = tape.param(0, &Tensor::full(Shape::new(3, 2, 3, 3), 0.3));
    let b = tape.param(1, &Tensor::full(Shape::new(3, 1, 1, 1), 0.1));
    let y = tape.conv2d(x, w, Some(b), ConvSpec::same(3, 1).unwrap()).unwrap();
    let z = tape.scale(y, 0.0);
    let s = tape.sum(z);
    let g = tape.backward(s).unwrap();
    assert!(g.get(x).unwrap().iter().all(|&v| v == 0.0));
    assert!(g.param(0).unwrap().iter().all(|&v| v == 0.0));
    assert!(g.param(1).unwrap().iter().all(|&v| v == 0.0));
}
