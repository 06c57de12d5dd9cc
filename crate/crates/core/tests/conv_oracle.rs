mod common;

use common::{naive_conv, random_conv_case, rng};
use mscanet::tensor::{conv2d_raw, ConvSpec, Shape, Tensor};

#[test]
fn dilated_conv_matches_sliding_window() {
    let mut r = rng(11);
    for i in 0..80 {
        let d = [1, 2, 4, 6][i % 4];
        let (x, w, b, spec) = random_conv_case(&mut r, d);
        let got = conv2d_raw(&x, &w, b.as_ref(), spec).unwrap();
        let want = naive_conv(&x, &w, b.as_ref(), spec);
        assert_eq!(got.shape(), want.shape(), "{spec:?}");
        for (a, e) in got.data().iter().zip(want.data()) {
            assert!((a - e).abs() < 1e-6, "{spec:?}: {a} vs {e}");
        }
    }
}

#[test]
fn same_padding_keeps_size_and_extent() {
    for d in [1, 2, 4, 6] {
        let spec = ConvSpec::same(3, d).unwrap();
        assert_eq!(spec.effective_extent(), 2 * d + 1);
        let x = Tensor::<f64>::full(Shape::new(1, 1, 13, 13), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let y = conv2d_raw(&x, &w, None, spec).unwrap();
        assert_eq!((y.shape().h, y.shape().w), (13, 13));
        // the centre output sees all nine taps
        assert_eq!(y.at(0, 0, 6, 6), 9.0);
    }
    assert!(ConvSpec::same(4, 1).is_err());
}

#[test]
fn channel_mismatch_is_rejected() {
    let x = Tensor::<f64>::zeros(Shape::new(1, 2, 5, 5));
    let w = Tensor::zeros(Shape::new(1, 3, 3, 3));
    assert!(conv2d_raw(&x, &w, None, ConvSpec::same(3, 1).unwrap()).is_err());
}
