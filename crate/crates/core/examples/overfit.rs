//! Fits the full model to one synthetic scene and prints the loss curve.
//!
//!     cargo run --release --example overfit -- [steps] [seed]

use mscanet::data::{generate_scene, AugmentConfig, Sample, SceneSpec};
use mscanet::density::KernelChoice;
use mscanet::train::{evaluate, TrainConfig, Trainer};

fn main() -> mscanet::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(500, |s| s.parse().expect("steps"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));

    let scene = generate_scene(&SceneSpec {
        seed,
        width: 64,
        height: 64,
        n_heads: 12,
        ..Default::default()
    })?;
    let sample = Sample::from_scene(scene, KernelChoice::default())?;

    let mut cfg = TrainConfig::desk();
    cfg.epochs = steps;
    cfg.batch_size = 1;
    cfg.decay_every = usize::MAX;
    cfg.augment = AugmentConfig {
        crop_size: 64,
        flip_prob: 0.0,
    };
    cfg.seed = seed;
    let mut trainer = Trainer::<f32>::new(cfg)?;
    let data = [sample];
    let log = trainer.fit(&data, None, |_, row| {
        if row.epoch % 50 == 0 || row.epoch < 10 {
            println!("step {:4}  loss {:.6}  density {:.6}", row.epoch, row.loss_total, row.loss_den);
        }
        Ok(())
    })?;
    let report = evaluate(&trainer.model, &data)?;
    let c = &report.counts[0];
    println!("gt count {:.3}  predicted {:.3}  relative error {:.4}", c.gt, c.pred, (c.pred - c.gt).abs() / c.gt);
    println!(
        "loss at step 10 {:.6}, final {:.6}, ratio {:.1}",
        log[9].loss_total,
        log.last().unwrap().loss_total,
        log[9].loss_total / log.last().unwrap().loss_total
    );
    Ok(())
}
