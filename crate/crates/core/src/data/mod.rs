//! Synthetic scenes, on-disk datasets and augmentation.
//!
//! A dataset directory holds `annotations.txt`, one image per scene under
//! `images/`, the full-resolution density under `density/` and the three
//! attention masks under `masks/`, all maps in the `DMAP` format.

pub mod annotations;
pub mod augment;
pub mod dmap;
pub mod pnm;
pub mod synth;

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use annotations::{load_annotations, save_annotations, AnnotationRecord};
pub use augment::{augment, hflip, random_crop, sample_rng, AugmentConfig, Sample};
pub use synth::{generate_scene, SceneSpec};

use crate::density::{multiscale_masks, AnnotatedScene, KernelChoice, MASK_THRESHOLD};
use crate::error::{config_err, Error, Result};

pub const ANNOTATION_FILE: &str = "annotations.txt";
const MASK_STRIDES: [usize; 3] = [8, 4, 2];

/// Parameters of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scenes: usize,
    pub width: usize,
    pub height: usize,
    pub heads_min: usize,
    pub heads_max: usize,
    pub seed: u64,
    pub clutter_level: f64,
    pub perspective: f64,
    pub head_radius: f64,
    pub clusters_max: usize,
    pub kernel: KernelChoice,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            scenes: 200,
            width: 96,
            height: 96,
            heads_min: 5,
            heads_max: 40,
            seed: 0,
            clutter_level: 0.5,
            perspective: 0.4,
            head_radius: 3.0,
            clusters_max: 4,
            kernel: KernelChoice::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.heads_min > self.heads_max {
            return Err(config_err!(
                "heads_min {} exceeds heads_max {}",
                self.heads_min,
                self.heads_max
            ));
        }
        if self.clusters_max == 0 {
            return Err(config_err!("clusters_max must be positive"));
        }
        Ok(())
    }

    /// Scene parameters for scene `index`, drawn from the dataset seed.
    pub fn scene_spec(&self, index: usize) -> SceneSpec {
        let mut rng = sample_rng(self.seed, u64::MAX, index as u64);
        SceneSpec {
            seed: rng.gen(),
            width: self.width,
            height: self.height,
            n_heads: rng.gen_range(self.heads_min..=self.heads_max),
            cluster_count: rng.gen_range(1..=self.clusters_max),
            perspective: self.perspective,
            clutter_level: self.clutter_level,
            head_radius: self.head_radius,
            margin: None,
        }
    }
}

/// Generates every scene of `spec` with densities and masks.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    (0..spec.scenes)
        .map(|i| {
            let mut scene = generate_scene(&spec.scene_spec(i))?;
            scene.id = format!("scene_{i:05}");
            Sample::from_scene(scene, spec.kernel)
        })
        .collect()
}

fn image_path(dir: &Path, id: &str, channels: usize) -> PathBuf {
    let ext = if channels == 1 { "pgm" } else { "ppm" };
    dir.join("images").join(format!("{id}.{ext}"))
}

fn density_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("density").join(format!("{id}.dmap"))
}

fn mask_path(dir: &Path, id: &str, stride: usize) -> PathBuf {
    dir.join("masks").join(format!("{id}_s{stride}.dmap"))
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn write_dataset(dir: &Path, samples: &[Sample]) -> Result<()> {
    for sub in ["images", "density", "masks"] {
        mkdir(&dir.join(sub))?;
    }
    let records: Vec<AnnotationRecord> = samples
        .iter()
        .map(|s| AnnotationRecord {
            id: s.id().to_string(),
            width: s.width(),
            height: s.height(),
            points: s.scene.points.clone(),
        })
        .collect();
    save_annotations(&records, &dir.join(ANNOTATION_FILE))?;
    for s in samples {
        pnm::write_pnm(&s.scene.image, &image_path(dir, s.id(), s.scene.image.channels))?;
        dmap::write_density(&s.density, &density_path(dir, s.id()))?;
        for m in &s.masks {
            dmap::write_mask(m, &mask_path(dir, s.id(), m.stride))?;
        }
    }
    Ok(())
}

/// Loads a dataset directory. Maps missing from disk are recomputed with
/// `kernel`; stored maps are used as they are.
pub fn load_dataset(dir: &Path, kernel: KernelChoice) -> Result<Vec<Sample>> {
    let records = load_annotations(&dir.join(ANNOTATION_FILE))?;
    records
        .into_iter()
        .map(|r| {
            let gray = image_path(dir, &r.id, 1);
            let path = if gray.exists() { gray } else { image_path(dir, &r.id, 3) };
            let image = pnm::read_pnm(&path)?;
            if (image.width, image.height) != (r.width, r.height) {
                return Err(Error::Validation(format!(
                    "{}: image is {}x{} but annotation says {}x{}",
                    path.display(),
                    image.width,
                    image.height,
                    r.width,
                    r.height
                )));
            }
            let scene = AnnotatedScene {
                id: r.id,
                image,
                points: r.points,
            };
            let dp = density_path(dir, &scene.id);
            let density = if dp.exists() {
                dmap::read_density(&dp)?
            } else {
                kernel.density(&scene)?
            };
            if (density.width, density.height, density.stride) != (scene.width(), scene.height(), 1) {
                return Err(Error::Validation(format!("{}: density does not match image", dp.display())));
            }
            let mp: Vec<PathBuf> = MASK_STRIDES.iter().map(|&s| mask_path(dir, &scene.id, s)).collect();
            let masks = if mp.iter().all(|p| p.exists()) {
                let m = [dmap::read_mask(&mp[0])?, dmap::read_mask(&mp[1])?, dmap::read_mask(&mp[2])?];
                for (mask, s) in m.iter().zip(MASK_STRIDES) {
                    if (mask.width * s, mask.height * s) != (scene.width(), scene.height()) {
                        return Err(Error::Validation(format!("mask for {} at stride {s} has wrong size", scene.id)));
                    }
                }
                m
            } else {
                multiscale_masks(&density, MASK_THRESHOLD)?
            };
            Ok(Sample { scene, density, masks })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            scenes: 3,
            width: 32,
            height: 32,
            heads_min: 2,
            heads_max: 6,
            ..Default::default()
        };
        let samples = generate_dataset(&spec).unwrap();
        write_dataset(dir.path(), &samples).unwrap();
        let back = load_dataset(dir.path(), spec.kernel).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.scene, b.scene);
            assert_eq!(a.masks, b.masks);
            for (x, y) in a.density.values.iter().zip(&b.density.values) {
                assert!((x - y).abs() <= 1e-7 * x.abs().max(1e-30));
            }
        }
    }

    #[test]
    fn head_bounds_collapse() {
        let spec = DatasetSpec {
            scenes: 4,
            heads_min: 10,
            heads_max: 10,
            ..Default::default()
        };
        for s in generate_dataset(&spec).unwrap() {
            assert_eq!(s.scene.points.len(), 10);
        }
        assert!(DatasetSpec {
            heads_min: 3,
            heads_max: 2,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
