//! Ground truth for one synthetic scene: fixed and adaptive kernels,
//! the three attention masks, and the files the dataset loader reads.
//!
//!     cargo run --example density_maps -- [out_dir]

use std::path::PathBuf;

use mscanet::cli::render_map;
use mscanet::data::{dmap, generate_scene, pnm, SceneSpec};
use mscanet::density::{adaptive_density, adaptive_sigmas, fixed_density, multiscale_masks, MASK_THRESHOLD};

fn main() -> mscanet::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "density_maps_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| mscanet::Error::io(&out, e))?;

    let scene = generate_scene(&SceneSpec {
        seed: 3,
        n_heads: 25,
        cluster_count: 2,
        ..Default::default()
    })?;
    let sigmas = adaptive_sigmas(&scene.points, 0.3)?;
    let (lo, hi) = sigmas.iter().fold((f64::MAX, 0.0f64), |(a, b), s| (a.min(*s), b.max(*s)));
    println!("{} heads, adaptive sigma in [{lo:.2}, {hi:.2}]", scene.points.len());

    let fixed = fixed_density(&scene, 4.0)?;
    let adaptive = adaptive_density(&scene, 0.3)?;
    println!("mass: fixed {:.4}, adaptive {:.4}", fixed.sum(), adaptive.sum());

    for m in multiscale_masks(&adaptive, MASK_THRESHOLD)? {
        println!("stride {} mask: {}x{}, {} foreground cells", m.stride, m.width, m.height, m.count());
        dmap::write_mask(&m, &out.join(format!("mask_s{}.dmap", m.stride)))?;
    }
    dmap::write_density(&adaptive, &out.join("density.dmap"))?;
    pnm::write_pnm(&scene.image, &out.join("scene.pgm"))?;
    pnm::write_pnm(&render_map(&adaptive, true, Some(&scene.image))?, &out.join("overlay.ppm"))?;
    println!("wrote {}", out.display());
    Ok(())
}
