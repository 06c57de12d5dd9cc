//! Short training run, checkpoint round trip, then prediction and a heat
//! map of one held-out scene.
//!
//!     cargo run --release --example predict -- [out_dir]

use std::path::PathBuf;

use mscanet::cli::render_map;
use mscanet::data::{generate_dataset, pnm, DatasetSpec};
use mscanet::model::{load_model, Model};
use mscanet::train::{evaluate, predict_map, save_checkpoint, TrainConfig, Trainer};

fn main() -> mscanet::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "predict_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| mscanet::Error::io(&out, e))?;
    let train = generate_dataset(&DatasetSpec {
        scenes: 32,
        seed: 1,
        ..Default::default()
    })?;
    let test = generate_dataset(&DatasetSpec {
        scenes: 8,
        seed: 2,
        ..Default::default()
    })?;
    let mut cfg = TrainConfig::desk();
    cfg.epochs = 8;
    let mut t = Trainer::<f32>::new(cfg)?;
    t.fit(&train, None, |_, row| {
        println!("epoch {}  loss {:.5}", row.epoch, row.loss_total);
        Ok(())
    })?;
    let path = out.join("model.msca");
    save_checkpoint(&t.checkpoint(), &path)?;
    let model: Model<f32> = load_model(&path)?;
    let report = evaluate(&model, &test)?;
    print!("{}", report.to_text());

    let s = &test[0];
    let map = predict_map(&model, &s.scene.image)?;
    println!("{}: gt {:.2}, predicted {:.2}", s.id(), s.count(), map.sum());
    pnm::write_pnm(&render_map(&map, true, Some(&s.scene.image))?, &out.join("heat.ppm"))?;
    Ok(())
}
