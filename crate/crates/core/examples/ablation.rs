//! Trains the three variants on a shared synthetic split and reports the
//! per-seed and median test metrics.
//!
//!     cargo run --release --example ablation -- [seeds] [epochs]

use mscanet::data::{generate_dataset, DatasetSpec};
use mscanet::train::{ablation_csv, ablation_matrix, TrainConfig};

fn main() -> mscanet::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(1, |s| s.parse().expect("seeds"));
    let epochs: usize = args.next().map_or(50, |s| s.parse().expect("epochs"));
    let split = |scenes, seed| DatasetSpec {
        scenes,
        seed,
        ..Default::default()
    };
    let train = generate_dataset(&split(200, 1))?;
    let test = generate_dataset(&split(50, 2))?;
    let mut cfg = TrainConfig::desk();
    cfg.epochs = epochs;
    let seeds: Vec<u64> = (0..seeds).collect();
    let runs = ablation_matrix(&cfg, &seeds, &train, &test, |r| {
        eprintln!("seed {} {:9} mae {:.3} psnr {:.2}", r.seed, r.variant.name(), r.report.mae, r.report.psnr);
    })?;
    print!("{}", ablation_csv(&runs)?);
    Ok(())
}
