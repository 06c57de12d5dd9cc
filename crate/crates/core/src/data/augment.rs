//! Training samples and joint crop / flip augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{
    downscale_density, multiscale_masks, AnnotatedScene, AttentionMask, DensityMap, KernelChoice, Point,
    MASK_THRESHOLD,
};
use crate::error::{config_err, Error, Result};

/// A scene with its full-resolution density and masks at strides 8, 4, 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub scene: AnnotatedScene,
    pub density: DensityMap,
    pub masks: [AttentionMask; 3],
}

impl Sample {
    pub fn from_scene(scene: AnnotatedScene, kernel: KernelChoice) -> Result<Self> {
        scene.validate()?;
        let density = kernel.density(&scene)?;
        let masks = multiscale_masks(&density, MASK_THRESHOLD)?;
        Ok(Sample { scene, density, masks })
    }

    pub fn id(&self) -> &str {
        &self.scene.id
    }

    pub fn width(&self) -> usize {
        self.scene.width()
    }

    pub fn height(&self) -> usize {
        self.scene.height()
    }

    /// Ground-truth count.
    pub fn count(&self) -> f64 {
        self.density.sum()
    }

    /// Density block-summed to `stride`.
    pub fn density_at(&self, stride: usize) -> Result<DensityMap> {
        downscale_density(&self.density, stride)
    }

    /// Same window on every map; coordinates must be multiples of 8.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if [x0, y0, w, h].iter().any(|v| v % 8 != 0) {
            return Err(config_err!("crop window ({x0}, {y0}, {w}, {h}) must be aligned to 8"));
        }
        let img = self.scene.image.crop(x0, y0, w, h)?;
        let (fx, fy) = (x0 as f64, y0 as f64);
        let points = self
            .scene
            .points
            .iter()
            .filter(|p| p.x >= fx && p.x < fx + w as f64 && p.y >= fy && p.y < fy + h as f64)
            .map(|p| Point::new(p.x - fx, p.y - fy))
            .collect();
        let mut masks = self.masks.clone();
        for m in masks.iter_mut() {
            let s = m.stride;
            *m = m.crop(x0 / s, y0 / s, w / s, h / s)?;
        }
        Ok(Sample {
            scene: AnnotatedScene {
                id: self.scene.id.clone(),
                image: img,
                points,
            },
            density: self.density.crop(x0, y0, w, h)?,
            masks,
        })
    }

    /// Mirror image; a point at `x` moves to `W - x`, kept on the
    /// annotation grid of 1/1000 pixel.
    pub fn flip(&self) -> Self {
        let w = self.width() as f64;
        let points = self
            .scene
            .points
            .iter()
            .map(|p| Point::new(((w - p.x) * 1000.0).round() / 1000.0, p.y))
            .filter(|p| p.x < w)
            .collect();
        Sample {
            scene: AnnotatedScene {
                id: self.scene.id.clone(),
                image: self.scene.image.flip_horizontal(),
                points,
            },
            density: self.density.flip_horizontal(),
            masks: self.masks.clone().map(|m| m.flip_horizontal()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub crop_size: usize,
    pub flip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_size: 320,
            flip_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn desk() -> Self {
        AugmentConfig {
            crop_size: 64,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_size == 0 || self.crop_size % 8 != 0 {
            return Err(config_err!("crop_size {} must be a positive multiple of 8", self.crop_size));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(config_err!("flip_prob {} outside [0, 1]", self.flip_prob));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator owned by one (seed, epoch, sample) triple.
pub fn sample_rng(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ epoch) ^ index))
}

/// Square crop with offsets on the 8-pixel grid. Always draws two values.
pub fn random_crop(sample: &Sample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let c = cfg.crop_size;
    let (w, h) = (sample.width(), sample.height());
    if c > w || c > h {
        return Err(Error::Input(format!("crop {c} larger than {w}x{h} image {}", sample.id())));
    }
    let kx = rng.gen_range(0..=(w - c) / 8);
    let ky = rng.gen_range(0..=(h - c) / 8);
    sample.crop(8 * kx, 8 * ky, c, c)
}

/// Flip with probability `flip_prob`. Always draws one value.
pub fn hflip(sample: Sample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Sample {
    let u: f64 = rng.gen();
    if u < cfg.flip_prob {
        sample.flip()
    } else {
        sample
    }
}

pub fn augment(sample: &Sample, cfg: &AugmentConfig, seed: u64, epoch: u64, index: u64) -> Result<Sample> {
    let mut rng = sample_rng(seed, epoch, index);
    let cropped = random_crop(sample, cfg, &mut rng)?;
    Ok(hflip(cropped, cfg, &mut rng))
}
