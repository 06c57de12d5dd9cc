//! Ground-truth density maps and attention masks from head annotations.
//!
//! Each annotated head contributes a unit-mass Gaussian. The kernel is
//! evaluated at pixel centres inside a square window of half-width
//! `ceil(3 sigma)`, normalised to sum to one over the whole window and only
//! then clipped at the image border, so heads away from the border keep
//! their full mass. Attention masks threshold the full-resolution density
//! and are reduced to coarser scales by block maximum.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::image::Image;
use crate::tensor::{Real, Shape, Tensor};

/// Neighbour count for the geometry-adaptive kernel.
pub const KNN_K: usize = 3;
/// Spread of the adaptive kernel relative to the mean neighbour distance.
pub const ADAPTIVE_BETA: f64 = 0.3;
/// Fixed-kernel sigma, also the fallback for scenes with fewer than two heads.
pub const FIXED_SIGMA: f64 = 15.0;
/// Smallest sigma the adaptive kernel may produce, in pixels.
pub const MIN_SIGMA: f64 = 1.0;
/// Density threshold separating foreground from background.
pub const MASK_THRESHOLD: f64 = 1e-4;
/// Foreground is where `density >= threshold`. Setting this to `false`
/// applies the inequality the other way round (`density <= threshold`).
pub const FOREGROUND_AT_OR_ABOVE_THRESHOLD: bool = true;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// An image together with its head-point annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedScene {
    pub id: String,
    pub image: Image,
    pub points: Vec<Point>,
}

impl AnnotatedScene {
    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    /// Checks that every point lies inside `[0, W) x [0, H)`.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width() as f64, self.height() as f64);
        for (i, p) in self.points.iter().enumerate() {
            if !(p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h) {
                return Err(crate::Error::Validation(format!(
                    "scene {}: point {i} at ({}, {}) outside {}x{}",
                    self.id,
                    p.x,
                    p.y,
                    self.width(),
                    self.height()
                )));
            }
        }
        Ok(())
    }
}

/// Single-channel people-per-pixel map.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub width: usize,
    pub height: usize,
    /// Downsampling factor relative to the source image.
    pub stride: usize,
    pub values: Vec<f64>,
}

impl DensityMap {
    pub fn zeros(width: usize, height: usize, stride: usize) -> Self {
        DensityMap {
            width,
            height,
            stride,
            values: vec![0.0; width * height],
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn flip_horizontal(&self) -> Self {
        DensityMap {
            values: flip_rows(&self.values, self.width),
            ..self.clone()
        }
    }

    /// Window `[x0, x0 + w) x [y0, y0 + h)` in this map's own pixel units.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Ok(DensityMap {
            width: w,
            height: h,
            stride: self.stride,
            values: crop_rows(&self.values, self.width, self.height, x0, y0, w, h)?,
        })
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.values.iter().map(|&v| T::from_float(v)).collect();
        Tensor::from_vec(Shape::new(1, 1, self.height, self.width), data).expect("map dims")
    }

    pub fn from_tensor<T: Real>(t: &Tensor<T>, stride: usize) -> Result<Self> {
        let s = t.shape();
        if s.n != 1 || s.c != 1 {
            return Err(config_err!("density tensor must be 1x1xHxW, got {s}"));
        }
        Ok(DensityMap {
            width: s.w,
            height: s.h,
            stride,
            values: t.data().iter().map(|v| v.to_float()).collect(),
        })
    }
}

/// Binary foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub values: Vec<bool>,
}

impl AttentionMask {
    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    pub fn flip_horizontal(&self) -> Self {
        AttentionMask {
            values: flip_rows(&self.values, self.width),
            ..self.clone()
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Ok(AttentionMask {
            width: w,
            height: h,
            stride: self.stride,
            values: crop_rows(&self.values, self.width, self.height, x0, y0, w, h)?,
        })
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self
            .values
            .iter()
            .map(|&v| if v { T::one() } else { T::zero() })
            .collect();
        Tensor::from_vec(Shape::new(1, 1, self.height, self.width), data).expect("mask dims")
    }
}

pub(crate) fn flip_rows<V: Clone>(values: &[V], width: usize) -> Vec<V> {
    values
        .chunks(width)
        .flat_map(|row| row.iter().rev().cloned())
        .collect()
}

pub(crate) fn crop_rows<V: Clone>(
    values: &[V],
    width: usize,
    height: usize,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
) -> Result<Vec<V>> {
    if x0 + w > width || y0 + h > height {
        return Err(config_err!(
            "crop {w}x{h} at ({x0}, {y0}) exceeds {width}x{height}"
        ));
    }
    Ok((y0..y0 + h)
        .flat_map(|y| values[y * width + x0..y * width + x0 + w].iter().cloned())
        .collect())
}

/// Mean distance from each point to its `k` nearest other points.
///
/// Points with fewer than `k` others average over those available; a lone
/// point yields `None`.
pub fn knn_mean_distance(points: &[Point], k: usize) -> Result<Vec<Option<f64>>> {
    if k == 0 {
        return Err(config_err!("knn needs k >= 1"));
    }
    let mut nearest: Vec<f64> = Vec::with_capacity(k);
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            nearest.clear();
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = p.dist(q);
                if nearest.len() < k {
                    let at = nearest.partition_point(|&v| v <= d);
                    nearest.insert(at, d);
                } else if d < nearest[k - 1] {
                    nearest.pop();
                    let at = nearest.partition_point(|&v| v <= d);
                    nearest.insert(at, d);
                }
            }
            (!nearest.is_empty()).then(|| nearest.iter().sum::<f64>() / nearest.len() as f64)
        })
        .collect())
}

/// Per-head sigmas of the geometry-adaptive kernel.
pub fn adaptive_sigmas(points: &[Point], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(config_err!("beta must be positive, got {beta}"));
    }
    if points.len() < 2 {
        return Ok(vec![FIXED_SIGMA; points.len()]);
    }
    Ok(knn_mean_distance(points, KNN_K)?
        .into_iter()
        .map(|d| d.map_or(FIXED_SIGMA, |d| (beta * d).max(MIN_SIGMA)))
        .collect())
}

/// Density map with sigma proportional to each head's neighbour distance.
pub fn adaptive_density(scene: &AnnotatedScene, beta: f64) -> Result<DensityMap> {
    let sigmas = adaptive_sigmas(&scene.points, beta)?;
    Ok(splat(scene.width(), scene.height(), &scene.points, &sigmas))
}

/// Density map with the same sigma for every head.
pub fn fixed_density(scene: &AnnotatedScene, sigma: f64) -> Result<DensityMap> {
    if !(sigma > 0.0) {
        return Err(config_err!("sigma must be positive, got {sigma}"));
    }
    let sigmas = vec![sigma; scene.points.len()];
    Ok(splat(scene.width(), scene.height(), &scene.points, &sigmas))
}

/// Window radius in pixels for a kernel of the given sigma.
pub fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Normalised 1-D weights over the pixels whose centres are within the
/// window radius of `center`. Returns the first covered index (possibly
/// negative) and the weights.
fn axis_weights(center: f64, sigma: f64) -> (i64, Vec<f64>) {
    let r = kernel_radius(sigma) as f64;
    let first = (center - r - 0.5).ceil() as i64;
    let last = (center + r - 0.5).floor() as i64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let w: Vec<f64> = (first..=last)
        .map(|i| {
            let d = i as f64 + 0.5 - center;
            (-d * d * inv).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    (first, w.into_iter().map(|v| v / total).collect())
}

fn splat(width: usize, height: usize, points: &[Point], sigmas: &[f64]) -> DensityMap {
    let mut map = DensityMap::zeros(width, height, 1);
    for (p, &sigma) in points.iter().zip(sigmas) {
        let (x0, wx) = axis_weights(p.x, sigma);
        let (y0, wy) = axis_weights(p.y, sigma);
        for (dy, gy) in wy.iter().enumerate() {
            let y = y0 + dy as i64;
            if y < 0 || y >= height as i64 {
                continue;
            }
            let row = &mut map.values[y as usize * width..(y as usize + 1) * width];
            for (dx, gx) in wx.iter().enumerate() {
                let x = x0 + dx as i64;
                if x >= 0 && x < width as i64 {
                    row[x as usize] += gy * gx;
                }
            }
        }
    }
    map
}

/// Binary foreground mask of a density map.
pub fn attention_mask(density: &DensityMap, threshold: f64) -> Result<AttentionMask> {
    if !(threshold > 0.0) {
        return Err(config_err!("mask threshold must be positive, got {threshold}"));
    }
    let values = density
        .values
        .iter()
        .map(|&v| {
            if FOREGROUND_AT_OR_ABOVE_THRESHOLD {
                v >= threshold
            } else {
                v <= threshold
            }
        })
        .collect();
    Ok(AttentionMask {
        width: density.width,
        height: density.height,
        stride: density.stride,
        values,
    })
}

fn check_factor(width: usize, height: usize, factor: usize) -> Result<()> {
    if factor == 0 || width % factor != 0 || height % factor != 0 {
        return Err(config_err!(
            "{width}x{height} is not divisible by downscale factor {factor}"
        ));
    }
    Ok(())
}

/// Block maximum: a coarse cell is foreground if any covered pixel is.
pub fn downscale_mask(mask: &AttentionMask, factor: usize) -> Result<AttentionMask> {
    check_factor(mask.width, mask.height, factor)?;
    let (w, h) = (mask.width / factor, mask.height / factor);
    let mut values = vec![false; w * h];
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.values[y * mask.width + x] {
                values[(y / factor) * w + x / factor] = true;
            }
        }
    }
    Ok(AttentionMask {
        width: w,
        height: h,
        stride: mask.stride * factor,
        values,
    })
}

/// Block sum: the total count is preserved.
pub fn downscale_density(density: &DensityMap, factor: usize) -> Result<DensityMap> {
    check_factor(density.width, density.height, factor)?;
    let (w, h) = (density.width / factor, density.height / factor);
    let mut values = vec![0.0; w * h];
    for y in 0..density.height {
        for x in 0..density.width {
            values[(y / factor) * w + x / factor] += density.values[y * density.width + x];
        }
    }
    Ok(DensityMap {
        width: w,
        height: h,
        stride: density.stride * factor,
        values,
    })
}

/// Which kernel turns annotations into density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelChoice {
    Adaptive { beta: f64 },
    Fixed { sigma: f64 },
}

impl Default for KernelChoice {
    fn default() -> Self {
        KernelChoice::Adaptive {
            beta: ADAPTIVE_BETA,
        }
    }
}

impl KernelChoice {
    pub fn density(&self, scene: &AnnotatedScene) -> Result<DensityMap> {
        match *self {
            KernelChoice::Adaptive { beta } => adaptive_density(scene, beta),
            KernelChoice::Fixed { sigma } => fixed_density(scene, sigma),
        }
    }
}

/// Full-resolution masks reduced to strides 8, 4 and 2, coarsest first.
pub fn multiscale_masks(density: &DensityMap, threshold: f64) -> Result<[AttentionMask; 3]> {
    let full = attention_mask(density, threshold)?;
    Ok([
        downscale_mask(&full, 8)?,
        downscale_mask(&full, 4)?,
        downscale_mask(&full, 2)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(w: usize, h: usize, points: Vec<Point>) -> AnnotatedScene {
        AnnotatedScene {
            id: "t".into(),
            image: Image::zeros(w, h, 1),
            points,
        }
    }

    #[test]
    fn knn_collinear_and_square() {
        let line = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        let d = knn_mean_distance(&line, 2).unwrap();
        assert_eq!(d[1], Some(1.0));
        assert_eq!(d[0], Some(1.5));

        let square = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        ];
        let expected = (2.0 + 2f64.sqrt()) / 3.0;
        for v in knn_mean_distance(&square, 3).unwrap() {
            assert!((v.unwrap() - expected).abs() < 1e-12);
        }
        assert!((expected - 1.1381).abs() < 1e-4);
    }

    #[test]
    fn knn_edge_cases() {
        assert!(knn_mean_distance(&[], 3).unwrap().is_empty());
        assert_eq!(knn_mean_distance(&[Point::new(1.0, 1.0)], 3).unwrap(), vec![None]);
        // fewer than k neighbours: average over what exists
        let two = [Point::new(0.0, 0.0), Point::new(3.0, 4.0)];
        assert_eq!(knn_mean_distance(&two, 3).unwrap(), vec![Some(5.0), Some(5.0)]);
        assert!(knn_mean_distance(&two, 0).is_err());
    }

    #[test]
    fn empty_scene_gives_zero_map() {
        let m = adaptive_density(&scene(16, 8, vec![]), 0.3).unwrap();
        assert_eq!(m.sum(), 0.0);
        assert_eq!((m.width, m.height), (16, 8));
    }

    #[test]
    fn single_head_uses_fixed_fallback() {
        let m = adaptive_density(&scene(64, 64, vec![Point::new(32.0, 32.0)]), 0.3).unwrap();
        // sigma 15 -> radius 45 clips on a 64x64 image
        assert!(m.sum() < 1.0);
        let big = adaptive_density(&scene(128, 128, vec![Point::new(64.0, 64.0)]), 0.3).unwrap();
        assert!((big.sum() - 1.0).abs() < 1e-6);
        let fixed = fixed_density(&scene(128, 128, vec![Point::new(64.0, 64.0)]), FIXED_SIGMA).unwrap();
        assert_eq!(big, fixed);
    }

    #[test]
    fn small_sigma_single_head_has_unit_mass() {
        let m = fixed_density(&scene(64, 64, vec![Point::new(32.0, 32.0)]), 4.0).unwrap();
        assert!((m.sum() - 1.0).abs() < 1e-12);
        let m15 = fixed_density(&scene(256, 256, vec![Point::new(128.0, 128.0)]), 15.0).unwrap();
        assert!((m15.sum() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn coincident_heads_superpose() {
        let one = fixed_density(&scene(64, 64, vec![Point::new(30.2, 31.7)]), 3.0).unwrap();
        let two = fixed_density(
            &scene(64, 64, vec![Point::new(30.2, 31.7), Point::new(30.2, 31.7)]),
            3.0,
        )
        .unwrap();
        assert!((two.sum() - 2.0).abs() < 1e-12);
        assert_eq!(two.max(), 2.0 * one.max());
    }

    #[test]
    fn invalid_kernel_parameters() {
        let s = scene(8, 8, vec![]);
        assert!(fixed_density(&s, 0.0).is_err());
        assert!(adaptive_density(&s, -1.0).is_err());
        assert!(attention_mask(&DensityMap::zeros(2, 2, 1), 0.0).is_err());
    }

    #[test]
    fn mask_thresholding() {
        let zero = DensityMap::zeros(4, 4, 1);
        assert_eq!(attention_mask(&zero, 1e-4).unwrap().count(), 0);
        let mut one = DensityMap::zeros(4, 4, 1);
        one.values[5] = 0.5;
        let m = attention_mask(&one, 1e-4).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.values[5]);
    }

    #[test]
    fn mask_downscale_block_max() {
        let ones = AttentionMask {
            width: 4,
            height: 4,
            stride: 1,
            values: vec![true; 16],
        };
        let d = downscale_mask(&ones, 2).unwrap();
        assert_eq!(d.values, vec![true; 4]);
        assert_eq!(d.stride, 2);

        let mut single = AttentionMask {
            width: 4,
            height: 4,
            stride: 1,
            values: vec![false; 16],
        };
        single.values[13] = true;
        let d = downscale_mask(&single, 4).unwrap();
        assert_eq!(d.values, vec![true]);
        assert!(downscale_mask(&single, 3).is_err());
    }

    #[test]
    fn density_downscale_preserves_sum() {
        // dyadic values keep the sums exact in binary floating point
        let values: Vec<f64> = (0..64).map(|i| ((i * 37) % 17) as f64 / 1024.0).collect();
        let d = DensityMap {
            width: 8,
            height: 8,
            stride: 1,
            values,
        };
        for f in [1, 2, 4, 8] {
            assert_eq!(downscale_density(&d, f).unwrap().sum(), d.sum());
        }
        assert!(downscale_density(&d, 3).is_err());
    }

    #[test]
    fn flip_equivariance_of_fixed_kernel() {
        let pts = vec![Point::new(10.25, 20.5), Point::new(40.0, 7.125), Point::new(0.5, 60.0)];
        let flipped: Vec<Point> = pts.iter().map(|p| Point::new(64.0 - p.x, p.y)).collect();
        let a = fixed_density(&scene(64, 64, pts), 4.0).unwrap().flip_horizontal();
        let b = fixed_density(&scene(64, 64, flipped), 4.0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn scene_validation() {
        assert!(scene(8, 8, vec![Point::new(7.9, 0.0)]).validate().is_ok());
        assert!(scene(8, 8, vec![Point::new(8.0, 0.0)]).validate().is_err());
        assert!(scene(8, 8, vec![Point::new(1.0, -0.1)]).validate().is_err());
    }
}
