//! Reverse-mode gradients through a dilated convolution, checked against
//! central differences.
//!
//!     cargo run --example autograd

use mscanet::tensor::{ConvSpec, Shape, Tape, Tensor};

fn loss(x: &Tensor<f64>, w: &Tensor<f64>) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.leaf(w.clone().with_requires_grad(true));
    let y = tape.conv2d(xv, wv, None, ConvSpec::same(3, 2).unwrap()).unwrap();
    let y = tape.relu(y);
    let l = tape.sum(y);
    let value = tape.value(l).data()[0];
    let g = tape.backward(l).unwrap();
    (value, g.get(wv).unwrap().to_vec())
}

fn main() {
    let x = Tensor::from_fn(Shape::new(1, 2, 8, 8), |_, c, y, x| ((c * 7 + y * 3 + x) as f64 * 0.37).sin());
    let w = Tensor::from_fn(Shape::new(3, 2, 3, 3), |o, c, y, x| ((o * 5 + c * 3 + y * 2 + x) as f64 * 1.3).cos() * 0.2);
    let (value, grad) = loss(&x, &w);
    println!("loss {value:.6}");
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..grad.len() {
        let mut wp = w.clone();
        wp.data_mut()[i] += h;
        let mut wm = w.clone();
        wm.data_mut()[i] -= h;
        let numeric = (loss(&x, &wp).0 - loss(&x, &wm).0) / (2.0 * h);
        worst = worst.max((numeric - grad[i]).abs());
    }
    println!("{} weight gradients, worst deviation from central differences {worst:.2e}", grad.len());
}
