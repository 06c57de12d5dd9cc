//! Count and map-quality metrics on a prediction that is the ground truth
//! blurred and offset.
//!
//!     cargo run --example metrics

use mscanet::data::{generate_scene, SceneSpec};
use mscanet::density::{fixed_density, DensityMap};
use mscanet::metrics::{mae, psnr, rmse, ssim};

fn main() -> mscanet::Result<()> {
    let mut rows = Vec::new();
    for seed in 0..5 {
        let scene = generate_scene(&SceneSpec {
            seed,
            ..Default::default()
        })?;
        let gt = fixed_density(&scene, 2.0)?;
        let blurred = fixed_density(&scene, 3.0)?;
        let pred = DensityMap {
            values: blurred.values.iter().map(|v| 0.95 * v + 1e-5).collect(),
            ..blurred
        };
        println!(
            "scene {seed}: gt {:6.2}  pred {:6.2}  psnr {:5.2} dB  ssim {:.3}",
            gt.sum(),
            pred.sum(),
            psnr(&pred, &gt)?,
            ssim(&pred, &gt)?
        );
        rows.push((gt.sum(), pred.sum()));
    }
    println!("mae {:.3}  rmse {:.3}", mae(&rows)?, rmse(&rows)?);
    Ok(())
}
