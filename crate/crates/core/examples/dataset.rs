//! Writes a small synthetic dataset to disk and reads it back.
//!
//!     cargo run --example dataset -- [out_dir]

use std::path::PathBuf;

use mscanet::data::{generate_dataset, load_dataset, write_dataset, DatasetSpec};

fn main() -> mscanet::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dataset_out".into()));
    let spec = DatasetSpec {
        scenes: 8,
        heads_min: 5,
        heads_max: 15,
        seed: 42,
        ..Default::default()
    };
    let samples = generate_dataset(&spec)?;
    write_dataset(&out, &samples)?;
    let back = load_dataset(&out, spec.kernel)?;
    for s in &back {
        println!("{}  {}x{}  {:2} heads  count {:.3}", s.id(), s.width(), s.height(), s.scene.points.len(), s.count());
    }
    println!("{} scenes in {}", back.len(), out.display());
    Ok(())
}
