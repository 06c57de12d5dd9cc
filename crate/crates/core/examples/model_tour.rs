//! Builds the network at a few widths and prints parameter counts and the
//! shapes of its intermediate maps.
//!
//!     cargo run --example model_tour

use mscanet::model::{ForwardOptions, Model, ModelConfig, Variant};
use mscanet::tensor::{Shape, Tensor};

fn main() -> mscanet::Result<()> {
    for width in [1.0, 0.25, 0.125] {
        for v in [Variant::Full, Variant::NoHag, Variant::Backbone] {
            let m = Model::<f32>::new(ModelConfig::default().with_width(width).with_variant(v), 0, 0.01)?;
            println!("width {width:<5} {:9} {:>10} parameters", v.name(), m.params().numel());
        }
    }
    let model = Model::<f32>::new(ModelConfig::desk(), 0, 0.01)?;
    let mut s = model.frozen_session(ForwardOptions::eval());
    let x = s.input(Tensor::zeros(Shape::new(1, 1, 64, 64)));
    let f = s.backbone_forward(x)?;
    for (name, v) in [("F2", f.f2), ("F3", f.f3), ("C5", f.c5)] {
        println!("{name}: {}", s.tape().shape(v));
    }
    let out = s.forward(x)?;
    println!("density: {}", s.tape().shape(out.density));
    for (i, a) in out.attention.into_iter().flatten().enumerate() {
        println!("attention {}: {}", i + 1, s.tape().shape(a));
    }
    Ok(())
}
